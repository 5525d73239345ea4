"""Smoke test for the anonrec Python module.

Build and install the extension first:

    pip install maturin
    cd crates/python && maturin build --release && pip install ../../target/wheels/anonrec-*.whl

Then run `python python/smoke_test.py [path/to/u.data]`.
"""

import math
import os
import sys

import anonrec


def toy():
    triples = [
        (0, 0, 5), (0, 1, 3),
        (1, 0, 4), (1, 2, 2),
        (2, 1, 4),
        (3, 0, 1), (3, 1, 2), (3, 2, 4),
        (4, 2, 5),
    ]
    m = anonrec.RatingMatrix.from_triples([(u, i, float(v)) for u, i, v in triples])
    assert (m.n_users, m.n_items, m.nnz) == (5, 3, 9), m

    sims = anonrec.SimilarityMatrix.from_ratings(m)
    assert math.isclose(sims.get(0, 2), -17 / math.sqrt(1378), abs_tol=1e-12)
    assert sims.get(0, 2) == sims.get(2, 0)

    anon = anonrec.anonymize(m, 2, seed=3)
    audit = anon.audit()
    assert audit["satisfied_k"] >= 2, audit
    assert sum(anon.multiplicities) == m.n_users
    again = anonrec.AnonymizedMatrix.from_text(anon.to_text(with_sigma=True))
    assert again.sigma == anon.sigma
    assert again.to_text() == anon.to_text()

    identity = anonrec.anonymize(m, 1)
    a1 = anonrec.SimilarityMatrix.from_anonymized(identity)
    assert all(a1.get(i, j) == sims.get(i, j) for i in range(3) for j in range(3))

    reg = anonrec.Model("Case1/REG", ratings=m)
    ai = anonrec.Model("Case1A/AI", anon=identity)
    for u in range(m.n_users):
        for i in range(m.n_items):
            want, _ = reg.predict(i, user=u)
            got, _ = ai.predict(i, user=u)
            assert abs(want - got) < 1e-12

    ur = anonrec.Model("Case2A/UR", anon=anon)
    value, level = ur.predict(0, ratings=[(1, 4.0)])
    assert 1.0 <= value <= 5.0 and level in ("full", "item-mean", "global-mean")
    base, level = anonrec.Model("BASELINE", ratings=m).predict(0)
    assert level == "item-mean" and math.isclose(base, 10 / 3)

    residual = anon.residual([0, 1])
    assert min(residual) >= 0 and sum(residual) == m.n_users - 2

    try:
        anonrec.anonymize(m, 0)
    except ValueError as e:
        assert "k=0" in str(e)
    else:
        raise AssertionError("k=0 accepted")
    print("toy: ok")


def movielens(path):
    m = anonrec.RatingMatrix.load(path)
    print(m)
    anon = anonrec.anonymize(m, 10, seed=7)
    print(anon, anon.audit()["satisfied_k"])
    rows = anonrec.run_case1(m, k_values=[2, 10], trials=1, seed=7)
    by = {(r["model"], r["k"]): r["rmse"] for r in rows}
    print({f"{k[0]}@{k[1]}": round(v, 4) for k, v in sorted(by.items())})
    assert by[("Case1/REG", 0)] < by[("BASELINE", 0)]
    print("movielens: ok")


if __name__ == "__main__":
    toy()
    path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "data", "ml-100k", "u.data"
    )
    if os.path.exists(path):
        movielens(path)
    else:
        print(f"skipping MovieLens check: {path} not found")
