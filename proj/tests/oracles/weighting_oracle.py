"""Term weights for the three-document fixture, written out formula by formula.

Run once; the output is committed as tests/data/weighting_oracle.csv.
"""
import math

DOCS = {"A": "a a b", "B": "a c", "C": "b"}
LABELINGS = {"pos_A": {"A": 1, "B": 0, "C": 0}, "pos_AB": {"A": 1, "B": 1, "C": 0}}
K1, B, S = 1.2, 0.75, 1.0

print("labeling;doc;term;tfidf_augmented;delta_tfidf;bm25")
for name, lab in LABELINGS.items():
    docs = {k: v.split() for k, v in DOCS.items()}
    n = len(docs)
    n_pos = sum(lab.values())
    n_neg = n - n_pos
    terms = sorted({t for d in docs.values() for t in d})
    df = {t: sum(t in d for d in docs.values()) for t in terms}
    df_pos = {t: sum(t in d for k, d in docs.items() if lab[k]) for t in terms}
    df_neg = {t: df[t] - df_pos[t] for t in terms}
    avgdl = sum(len(d) for d in docs.values()) / n
    for k, d in docs.items():
        max_tf = max(d.count(t) for t in d)
        for t in sorted(set(d)):
            tf = d.count(t)
            aug = (0.5 + 0.5 * tf / max_tf) * math.log(n / df[t])
            delta = tf * math.log2(((df_neg[t] + S) * n_pos) / ((df_pos[t] + S) * n_neg))
            idf = math.log((n - df[t] + 0.5) / (df[t] + 0.5) + 1)
            bm25 = idf * tf * (K1 + 1) / (tf + K1 * (1 - B + B * len(d) / avgdl))
            print(f"{name};{k};{t};{aug!r};{delta!r};{bm25!r}")
