"""Scoring short posts for positive and negative sentiment.

Each post gets two scores from 1 (neutral) to 5. A post counts as positive
when its positive score is at least 2, and likewise for negative, so one post
can be both.
"""
from citysent.sentiment import default_lexicon, polarity_labels, score_text, tokenize

lex = default_lexicon()
print(len(lex.terms), "terms,", len(lex.boosters), "boosters,", len(lex.negators), "negators")

posts = [
    "just got coffee",
    "i love this city but i hate the traffic",
    "not happy about the train today",
    "sooo gooood!!",
    "very sad news tonight",
    "@friend check this http://t.co/x :)",
]
for text in posts:
    s = score_text(text, lex)
    pos, neg = polarity_labels(s)
    print(f"{text!r:45} -> +{s.positive} -{s.negative}  pos={pos} neg={neg}")

# what the tokenizer sees: elongation and exclamation flags per token
for tok in tokenize("sooo gooood!!"):
    print(tok)
