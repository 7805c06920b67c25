"""Regenerates davis_smiles_golden.tsv with RDKit.

Run once; the output is frozen into the repository. The SMILES strings are
written in aromatic (lowercase) form as canonicalized by RDKit, except the
two showcase strings (vatalanib, at7519), which are kept verbatim.
"""
from rdkit import Chem

VERBATIM = {
    "vatalanib": "Clc1ccc(Nc2nnc(Cc3ccncc3)c3ccccc23)cc1",
    "at7519": "O=C(NC1CCNCC1)c1[nH]ncc1NC(=O)c1c(Cl)cccc1Cl",
}

COMPOUNDS = {
    "imatinib": "Cc1ccc(NC(=O)c2ccc(CN3CCN(C)CC3)cc2)cc1Nc1nccc(-c2cccnc2)n1",
    "erlotinib": "COCCOc1cc2ncnc(Nc3cccc(C#C)c3)c2cc1OCCOC",
    "gefitinib": "COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1OCCCN1CCOCC1",
    "lapatinib": "CS(=O)(=O)CCNCc1ccc(-c2ccc3ncnc(Nc4ccc(OCc5cccc(F)c5)c(Cl)c4)c3c2)o1",
    "sorafenib": "CNC(=O)c1cc(Oc2ccc(NC(=O)Nc3ccc(Cl)c(C(F)(F)F)c3)cc2)ccn1",
    "sunitinib": "CCN(CC)CCNC(=O)c1c(C)[nH]c(/C=C2\\C(=O)Nc3ccc(F)cc32)c1C",
    "dasatinib": "Cc1nc(Nc2ncc(C(=O)Nc3c(C)cccc3Cl)s2)cc(N2CCN(CCO)CC2)n1",
    "nilotinib": "Cc1cn(-c2cc(NC(=O)c3ccc(C)c(Nc4nccc(-c5cccnc5)n4)c3)cc(C(F)(F)F)c2)cn1",
    "vandetanib": "COc1cc2c(Nc3ccc(Br)cc3F)ncnc2cc1OCC1CCN(C)CC1",
    "pazopanib": "Cc1ccc(Nc2nccc(N(C)c3ccc4c(C)n(C)nc4c3)n2)cc1S(N)(=O)=O",
    "tozasertib": "Cc1cc(Nc2cc(N3CCN(C)CC3)nc(Sc3ccc(NC(=O)C4CC4)cc3)n2)n[nH]1",
    "staurosporine": "CN[C@@H]1C[C@H]2O[C@@](C)([C@@H]1OC)n1c3ccccc3c3c4CNC(=O)c4c4c5ccccc5n2c4c31",
    "midostaurin": "CN([C@@H]1C[C@H]2O[C@@](C)([C@@H]1OC)n1c3ccccc3c3c4CNC(=O)c4c4c5ccccc5n2c4c31)C(=O)c1ccccc1",
    "canertinib": "C=CC(=O)Nc1cc2c(Nc3ccc(F)c(Cl)c3)ncnc2cc1OCCCN1CCOCC1",
    "afatinib": "CN(C)C/C=C/C(=O)Nc1cc2c(Nc3ccc(F)c(Cl)c3)ncnc2cc1O[C@H]1CCOC1",
    "neratinib": "CCOc1cc2ncc(C#N)c(Nc3ccc(OCc4ccccn4)c(Cl)c3)c2cc1NC(=O)/C=C/CN(C)C",
    "pelitinib": "CCOc1cc2ncc(C#N)c(Nc3ccc(F)c(Cl)c3)c2cc1NC(=O)/C=C/CN(C)C",
    "linifanib": "Cc1ccc(F)c(NC(=O)Nc2ccc(-c3cccc4[nH]nc(N)c34)cc2)c1",
    "quizartinib": "CC(C)(C)c1cc(NC(=O)Nc2ccc(-c3cn4c(n3)sc3cc(OCCN5CCOCC5)ccc34)cc2)no1",
    "motesanib": "CC1(C)CNc2cc(NC(=O)c3cccnc3NCc3ccncc3)ccc21",
    "saracatinib": "CN1CCN(CCOc2cc(OC3CCOCC3)c3c(Nc4c(Cl)ccc5c4OCO5)ncnc3c2)CC1",
    "selumetinib": "Cn1cnc2c(F)c(Nc3ccc(Br)cc3Cl)c(C(=O)NOCCO)cc21",
    "nintedanib": "COC(=O)c1ccc2c(c1)NC(=O)/C2=C(\\Nc1ccc(N(C)C(=O)CN2CCN(C)CC2)cc1)c1ccccc1",
    "dovitinib": "CN1CCN(c2ccc3nc(-c4c(N)c5c(F)cccc5[nH]c4=O)[nH]c3c2)CC1",
    "tofacitinib": "C[C@@H]1CCN(C(=O)CC#N)C[C@@H]1N(C)c1ncnc2[nH]ccc12",
    "crizotinib": "C[C@@H](Oc1cc(-c2cnn(C3CCNCC3)c2)cnc1N)c1c(Cl)ccc(F)c1Cl",
    "enzastaurin": "Cn1cc(C2=C(c3cn(C4CCN(Cc5ccccn5)CC4)c4ccccc34)C(=O)NC2=O)c2ccccc21",
    "tandutinib": "COc1cc2c(N3CCN(C(=O)Nc4ccc(OC(C)C)cc4)CC3)ncnc2cc1OCCCN1CCCCC1",
    "mln8054": "OC(=O)c1ccc(Nc2ncc3c(n2)-c2ccc(Cl)cc2C(c2c(F)cccc2F)=NC3)cc1",
    "pd173955": "CSc1cccc(Nc2ncc3cc(-c4c(Cl)cccc4Cl)c(=O)n(C)c3n2)c1",
    "pha665752": "Cc1[nH]c(/C=C2\\C(=O)Nc3ccc(S(=O)(=O)Cc4c(Cl)cccc4Cl)cc32)c(C)c1C(=O)N1CCC[C@@H]1CN1CCCC1",
    "pi103": "Oc1cccc(-c2nc(N3CCOCC3)c3oc4ncccc4c3n2)c1",
    "plx4720": "CCCS(=O)(=O)Nc1ccc(F)c(C(=O)c2c[nH]c3ncc(Cl)cc23)c1F",
    "sb202190": "Oc1ccc(-c2nc(-c3ccc(F)cc3)c(-c3ccncc3)[nH]2)cc1",
    "sb203580": "CS(=O)c1ccc(-c2nc(-c3ccc(F)cc3)c(-c3ccncc3)[nH]2)cc1",
    "sb431542": "NC(=O)c1ccc(-c2nc(-c3ccc4c(c3)OCO4)c(-c3ccccn3)[nH]2)cc1",
    "tae684": "COc1cc(N2CCC(N3CCN(C)CC3)CC2)ccc1Nc1ncc(Cl)c(Nc2ccccc2S(=O)(=O)C(C)C)n1",
    "gw2580": "COc1ccc(COc2ccc(Cc3cnc(N)nc3N)cc2OC)cc1",
    "bms345541": "Cc1ccc2nc(NCCN)c3ncc(C)n3c2c1",
    "sns032": "CC(C)(C)c1cnc(CSc2cnc(NC(=O)C3CCNCC3)s2)o1",
    "kw2449": "O=C(c1ccc(/C=C/c2n[nH]c3ccccc23)cc1)N1CCNCC1",
    "jnj7706621": "Nc1nc(Nc2ccc(S(N)(=O)=O)cc2)nn1C(=O)c1c(F)cccc1F",
    "raf265": "CN1C(Nc2ccc(C(F)(F)F)cc2)=Nc2cc(Oc3ccnc(-c4ncc(C(F)(F)F)[nH]4)c3)ccc21",
    "gdc0879": "OCCn1cc(-c2ccc3c(c2)CC/C3=N\\O)c(-c2ccncc2)n1",
    "pp242": "CC(C)n1nc(-c2cc3cc(O)ccc3[nH]2)c2c(N)ncnc21",
    "refametinib": "COc1cc(F)c(F)c(Nc2ccc(I)cc2F)c1NS(=O)(=O)C1(C[C@H](O)CO)CC1",
    "barasertib_hqpa": "CCN(CCO)CCCOc1ccc2c(Nc3cc(CC(=O)Nc4cccc(F)c4)[nH]n3)ncnc2c1",
    "bi2536": "CC[C@H]1C(=O)N(C)c2cnc(Nc3ccc(C(=O)NC4CCN(C)CC4)cc3OC)nc2N1C1CCCC1",
    "cp724714": "COCC(=O)NC/C=C/c1ccc2ncnc(Nc3ccc(Oc4ccc(C)nc4)c(C)c3)c2c1",
    "a674563": "Cc1n[nH]c2ccc(-c3cncc(OC[C@@H](N)Cc4ccccc4)c3)cc12",
    "ast487": "CCN1CCN(Cc2ccc(NC(=O)Nc3ccc(Oc4cc(NC)ncn4)cc3)cc2C(F)(F)F)CC1",
    "ki20227": "COc1cc2nccc(Oc3ccc(NC(=O)N[C@@H](C)c4nccs4)c(OC)c3)c2cc1OC",
    "axitinib": "CNC(=O)c1ccccc1Sc1ccc2c(/C=C/c3ccccn3)n[nH]c2c1",
    "bosutinib": "COc1cc(Nc2c(C#N)cnc3cc(OCCCN4CCN(C)CC4)c(OC)cc23)c(Cl)cc1Cl",
    "cediranib": "Cc1cc2c(F)c(Oc3ncnc4cc(OCCCN5CCCC5)c(OC)cc34)ccc2[nH]1",
    "fedratinib": "CC(C)(C)NS(=O)(=O)c1cccc(Nc2ncc(C)c(Nc3ccc(OCCN4CCCC4)cc3)n2)c1",
    "lestaurtinib": "C[C@@]12O[C@H](C[C@]1(O)CO)n1c3ccccc3c3c4CNC(=O)c4c4c5ccccc5n2c4c31",
    "flavopiridol": "CN1CC[C@@H](c2c(O)cc(O)c3c(=O)cc(-c4ccccc4Cl)oc23)[C@@H](O)C1",
    "roscovitine": "CC[C@H](CO)Nc1nc(NCc2ccccc2)c2ncn(C(C)C)c2n1",
    "mln120b": "Cc1nccc2[nH]c3c(NC(=O)c4cccnc4)cc(Cl)cc3c12",
}


def row(name, smiles):
    mol = Chem.MolFromSmiles(smiles)
    assert mol is not None, name
    aromatic = "".join("1" if a.GetIsAromatic() else "0" for a in mol.GetAtoms())
    hydrogens = ",".join(str(a.GetTotalNumHs()) for a in mol.GetAtoms())
    return "\t".join([
        name,
        smiles,
        str(mol.GetNumAtoms()),
        str(mol.GetNumBonds()),
        str(aromatic.count("1")),
        aromatic,
        hydrogens,
    ])


def main():
    lines = ["name\tsmiles\tatoms\tbonds\taromatic_atoms\taromatic_flags\ttotal_h"]
    for name, smi in VERBATIM.items():
        lines.append(row(name, smi))
    for name, smi in COMPOUNDS.items():
        mol = Chem.MolFromSmiles(smi)
        assert mol is not None, name
        lines.append(row(name, Chem.MolToSmiles(mol)))
    with open("davis_smiles_golden.tsv", "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
