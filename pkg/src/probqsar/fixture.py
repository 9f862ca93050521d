"""Generator for the bundled synthetic activity table.

Cyclopropylamine analogs: an aryl group on the ring carbon and a substituent
on the amine nitrogen. Activities are an additive group-contribution score
plus seeded Gaussian noise, so the table carries real structure-activity
signal without reproducing any measured data.
"""

from __future__ import annotations

import csv
import io

from .nn import Prng

# (fragment with attachment at the first atom, contribution)
ARYL_SUBSTITUENTS = [
    ("F", 0.30), ("Cl", 0.45), ("Br", 0.50), ("C", 0.15), ("OC", 0.20), ("C(F)(F)F", 0.60),
    ("O", -0.20), ("N", -0.30), ("C#N", 0.35), ("[N+](=O)[O-]", 0.10), ("C(=O)N", -0.10),
    ("c2ccccc2", 0.80), ("OCc2ccccc2", 1.00),
]
POSITION_SCALE = {"ortho": 0.4, "meta": 0.8, "para": 1.0}
HETEROARYLS = [("c1ccccc1", 0.0), ("c1ccsc1", -0.25), ("c1ccncc1", -0.40), ("c1ccc2ccccc2c1", 0.55)]
AMINE_GROUPS = [
    ("N", 0.0), ("CN", 0.25), ("CN(C)", -0.15), ("CCN", 0.20),
    ("c1ccccc1CN", 0.90), ("CC(=O)N", -0.60), ("NC(=O)CN", 0.45), ("OCCN", 0.10),
]


def _aryls() -> list[tuple[str, float]]:
    out = list(HETEROARYLS)
    for frag, score in ARYL_SUBSTITUENTS:
        out.append((f"c1c({frag})cccc1", score * POSITION_SCALE["ortho"]))
        out.append((f"c1cc({frag})ccc1", score * POSITION_SCALE["meta"]))
        out.append((f"c1ccc({frag})cc1", score * POSITION_SCALE["para"]))
    return out


def fixture_rows(n: int = 200, seed: int = 7, base: float = 6.0, noise: float = 0.3) -> list[tuple[str, str, float]]:
    """``n`` distinct (compound id, SMILES, pChEMBL) rows."""
    combos = []
    for amine, a_score in AMINE_GROUPS:
        for aryl, r_score in _aryls():
            combos.append((f"{amine}C1CC1{aryl}", a_score + r_score))
    if n > len(combos):
        raise ValueError(f"at most {len(combos)} distinct analogs")
    rng = Prng(seed)
    pick = rng.permutation(len(combos))[:n]
    eps = rng.normal(n)
    rows = []
    for i, j in enumerate(sorted(pick)):
        smiles, score = combos[j]
        value = round(min(max(base + score + noise * float(eps[i]), 3.0), 11.0), 2)
        rows.append((f"SYN{i + 1:04d}", smiles, value))
    return rows


def fixture_csv(n: int = 200, seed: int = 7) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["molecule_chembl_id", "canonical_smiles", "pchembl_value"])
    for cid, smiles, value in fixture_rows(n, seed):
        w.writerow([cid, smiles, f"{value:.2f}"])
    return buf.getvalue()


def fixture_path():
    from importlib.resources import files

    return files("probqsar") / "data" / "lsd1_synthetic.csv"
