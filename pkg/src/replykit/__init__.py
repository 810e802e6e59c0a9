"""Weakly supervised response-class curation and reply suggestion for dialogue corpora.

The pipeline runs in two stages. Stage one turns a raw dialogue corpus into a
curated label space: deduplicate one speaker's responses, block near-duplicate
candidates with multi-encoder nearest neighbors, score candidate pairs, run
sparse complete-linkage clustering, then let a human merge the most frequent
clusters into named response classes. Stage two trains a label-smoothed
softmax classifier that maps conversational context to a response class and
opts out when its confidence is low.
"""

__version__ = "0.1.0"
