"""Synthesizing query variations from the rule tables.

Two of the three variation families are pure rule application (question-stem
rewrites and singular/plural/article edits); the third (semantic
paraphrases) calls an external completion endpoint and is shown here only as
the request it would send.
"""

from conmerge import (
    QueryRecord,
    apply_edits,
    enumerate_number_article_edits,
    gen_howto_variations,
    gen_number_article_variations,
)
from conmerge.paraphrase import PARAPHRASE_PROMPT

corpus = [
    QueryRecord(id="q1", query="how do we manage customer feedback at end of project"),
    QueryRecord(id="q2", query="can we drive to a grocery store"),
    QueryRecord(id="q3", query="delivering packages for shipment"),
    QueryRecord(id="q4", query="how to add a contact to a phone book"),
]

print("question-stem rewrites (bidirectional rule table):")
for q in corpus:
    for var in gen_howto_variations(q):
        print(f"  {q.query!r}\n    -> {var.query!r}")

print("\nnumber/article edit sites:")
for q in corpus[2:]:
    edits = enumerate_number_article_edits(q.query)
    print(f"  {q.query!r}")
    for edit in edits:
        print(f"    {edit[0]:>24} @ token {edit[1]}: {apply_edits(q.query, [edit])!r}")

print("\nseeded sampling picks up to two edit sites per emitted variant:")
for q in corpus[2:]:
    for var in gen_number_article_variations(q, seed=11, count=3):
        print(f"  {q.query!r}\n    -> {var.query!r}")

print("\nsemantic paraphrases go through a chat endpoint with this template:")
print("  " + PARAPHRASE_PROMPT.format(query=corpus[0].query).replace("\n", "\n  "))
print("\n(set CONMERGE_ENDPOINT_URL / CONMERGE_ENDPOINT_TOKEN and use "
      "`conmerge synth --kinds sem` to fetch real ones)")
