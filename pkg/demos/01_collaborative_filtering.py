"""Citation-graph collaborative filtering on a toy network.

Two complementary signals vote for candidate papers:

* citing-side (ScCF): papers whose reference lists overlap the query's
  known citations vote for everything they cite;
* cited-side (CsCF): candidates that share citers with the query's known
  citations gain score.

Both use cosine similarity over binary reference / citer vectors, then get
max-normalized and blended.
"""

from citerec.corpus import Corpus, PaperRecord
from citerec.graph import build_graph, cf_blend, cscf_scores, sccf_scores


def paper(pid, refs=()):
    return PaperRecord(id=pid, title=pid, abstract="", references=frozenset(refs))


# A small co-citation neighborhood: S1..S3 are survey-ish papers citing
# overlapping sets; T is the paper everyone in the neighborhood cites.
papers = {p.id: p for p in [
    paper("S1", refs=["A", "B", "T"]),
    paper("S2", refs=["A", "C", "T"]),
    paper("S3", refs=["B", "C", "T"]),
    paper("Q_like", refs=["A", "B"]),
    paper("A"), paper("B"), paper("C"), paper("T"),
]}
graph = build_graph(Corpus(papers=papers))

# The query already cites A and B, so its profile is {A, B}.
profile = {"A", "B"}

sccf = sccf_scores(profile, graph)
print("ScCF votes (papers cited by profile-similar papers):")
for pid, score in sccf.ranking():
    print(f"  {pid}: {score:.4f}")

cscf = cscf_scores(profile, graph)
print("\nCsCF votes (papers co-cited with the profile):")
for pid, score in cscf.ranking():
    print(f"  {pid}: {score:.4f}")

blended = cf_blend(sccf, cscf, alpha=0.5)
print("\nBlended (alpha = 0.5, each side max-normalized first):")
for pid, score in blended.ranking():
    print(f"  {pid}: {score:.4f}")

print("\nT tops both lists: every similar paper cites it, and it shares")
print("citers with both profile members.")
