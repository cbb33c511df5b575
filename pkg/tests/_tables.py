"""Random audit tables shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from ijdi import AuditTable


def random_table(seed, n=120, cards=(3, 3, 2), theta=0.5, p_b_random=True) -> AuditTable:
    rng = np.random.default_rng(seed)
    feats = {f"a{j}": [f"v{c}" for c in rng.integers(0, k, n)] for j, k in enumerate(cards)}
    domains = {f"a{j}": [f"v{c}" for c in range(k)] for j, k in enumerate(cards)}
    p = rng.random(n)
    y0 = (rng.random(n) < p).astype(int)
    p_hat0 = rng.random(n)
    kw = {}
    if p_b_random:
        kw["p_b"] = (rng.random(n) < 0.5).astype(int)
    return AuditTable.from_columns(feats, y0, p_hat0, p, theta=theta, domains=domains, **kw)


def both_classes(table: AuditTable) -> bool:
    return 0 < int(table.y0.sum()) < len(table)


@st.composite
def tables(draw, max_rows=60, max_attrs=3, max_values=3):
    """Hypothesis strategy for small tables with both outcome classes."""
    m = draw(st.integers(1, max_attrs))
    cards = [draw(st.integers(1, max_values)) for _ in range(m)]
    n = draw(st.integers(4, max_rows))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    feats = {f"a{j}": [f"v{c}" for c in rng.integers(0, k, n)] for j, k in enumerate(cards)}
    domains = {f"a{j}": [f"v{c}" for c in range(k)] for j, k in enumerate(cards)}
    p = rng.random(n)
    y0 = (rng.random(n) < p).astype(int)
    y0[0], y0[1] = 0, 1
    p_b = (rng.random(n) < rng.random()).astype(int)
    return AuditTable.from_columns(feats, y0, rng.random(n), p, domains=domains, p_b=p_b)
