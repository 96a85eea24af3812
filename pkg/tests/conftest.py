import numpy as np
import pytest

from omnicon.core import Transcript


def make_transcript(y, actions, p=None, active=None, outcomes=None, n_actions=None, subsequence_ids=None):
    """Minimal transcript from per-round outcomes and actions.

    ``actions`` is (T,) or (T, N); ``outcomes`` is an optional list of
    (points, probs) per round; predictions default to the outcomes.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    T, d = y.shape
    actions = np.asarray(actions, dtype=np.int64).reshape(T, -1)
    N = actions.shape[1]
    p = y.copy() if p is None else np.asarray(p, dtype=float).reshape(T, d)
    active = np.zeros((T, 0), dtype=bool) if active is None else np.asarray(active, dtype=bool).reshape(T, -1)
    n_subs = active.shape[1]
    width = max(1, n_subs)
    A = n_actions or int(actions.max()) + 1
    if outcomes is None:
        out_off, out_pts, out_pr = np.zeros(T + 1, dtype=np.int64), np.zeros((0, d)), np.zeros(0)
    else:
        sizes = [len(pr) for _, pr in outcomes]
        out_off = np.r_[0, np.cumsum(sizes)].astype(np.int64)
        out_pts = np.concatenate([np.asarray(pts, dtype=float).reshape(-1, d) for pts, _ in outcomes])
        out_pr = np.concatenate([np.asarray(pr, dtype=float) for _, pr in outcomes])
    return Transcript(
        d=d, agent_ids=[f"agent{n}" for n in range(N)],
        subsequence_ids=subsequence_ids or [f"s{i}" for i in range(n_subs)],
        x=np.zeros((T, 0)), p=p, y=y, actions=actions, responsible=np.full((T, N), -1, dtype=np.int64),
        active=active, candidates=np.ones((T, N, width, A), dtype=bool),
        support_offsets=np.arange(T + 1, dtype=np.int64), support_points=p.copy(), support_probs=np.ones(T),
        outcome_offsets=out_off, outcome_points=out_pts, outcome_probs=out_pr)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
