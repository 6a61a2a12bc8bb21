"""
Judging with swapped order
==========================

Each comparison is asked twice with the two samples in opposite positions.
A judge that always picks whatever comes first therefore produces only ties,
and a judge that tracks content produces clean wins and losses.
"""

from interactsim.evaluation import JudgeSample, adjusted_win_rate, judge_pairs, judge_totals
from interactsim.llm import Gateway, MockBackend

pairs = []
for k in range(10):
    strong, weak = f"consistent trace {k}", f"erratic trace {k}"
    a, b = (strong, weak) if k < 7 else (weak, strong)
    pairs.append((f"p{k}", JudgeSample("ours", "profile", "memories", a), JudgeSample("baseline", "profile", "memories", b)))


def first_slot(request):
    return "1"


def content_aware(request):
    first = request.last_user_message.split("## Sample 2")[0]
    return "1" if "consistent" in first else "2"


for name, fn in (("position-biased", first_slot), ("content-aware", content_aware)):
    totals = judge_totals(judge_pairs(pairs, Gateway(MockBackend(fn))))
    print(f"{name:>15}: W/L/T = {totals['win']}/{totals['loss']}/{totals['tie']}, adjusted win rate {totals['adjusted_win_rate']:.3f}")

# the rate credits half a point per tie
print("all ties ->", adjusted_win_rate(0, 0, 10))
