"""Entity-pair ranking and property prediction.

Entity-pair ranking asks a model to list the most plausible (head, tail)
pairs of a relation from scratch, with no entity given.  Every pair outside
train and valid is scored, and MAP@K and P@K measure how many test pairs
surface near the top.  Scores of different heads compete directly here,
something per-query link prediction never checks, so the two protocols can
order the models differently.

Property prediction asks, for an entity, which relations apply to it at
all.  A relation's score is the best score over all tails, and the true
relation is ranked against every other one.  The filtered variant drops
relations the entity already has in train.

Run:  python3 demos/04_pairs_and_properties.py      (about 30 s)
"""

from kgeval.graph import SplitSpec
from kgeval.models import FAMILIES
from kgeval.pairrank import pair_rank_macro
from kgeval.property import build_property_testset, rank_properties
from kgeval.synthetic import fb15k237_standin, random_graph
from kgeval.training import TrainConfig, bundled_config, train

cfg = TrainConfig.from_file(bundled_config("tiny"))
dense = fb15k237_standin(0.01, seed=0)
# sparse enough that many test (h, r) pairs have no train counterpart
sparse = random_graph(600, 30, 3000, n_types=8, seed=0, fanout=3, split=SplitSpec(0.9, 0.05, 0.05, 0))
cases = build_property_testset(sparse)
print(f"pair ranking on {dense.num_entities}^2 candidate pairs per relation")
print(f"property prediction on {len(cases)} cases (test (h, r) pairs with no (h, r, *) in train)\n")

K = 50
print(f"{'model':9s} {'MAP@' + str(K):>8s} {'P@' + str(K):>7s} {'prop MRR':>9s} {'prop MR':>8s} {'filtered MRR':>13s}")
for family in FAMILIES:
    pairs = pair_rank_macro(train(dense, cfg, family), dense, k=K)
    p = train(sparse, cfg, family)
    _, raw = rank_properties(p, sparse, cases, "max", filter_known=False)
    _, filt = rank_properties(p, sparse, cases, "max", filter_known=True)
    print(f"{family:9s} {pairs['map']:8.3f} {pairs['p']:7.3f} {raw.mrr:9.3f} {raw.mr:8.2f} {filt.mrr:13.3f}")

best = max(pairs["per_relation"], key=lambda x: x.ap_at_k)
print(f"\nbest relation for {family}: {dense.relations[best.relation]} "
      f"(AP@{K} {best.ap_at_k:.3f}, {best.num_test_pairs} test pairs)")
