import datetime as dt

import numpy as np
import pytest

from cfdialogue.data import FEATURE_DIM, N_ODES, Dataset, Dialogue

DAY0 = dt.date(2021, 3, 1)


def make_dialogue(rng, n=5, odes=None, rating=3.0, id="d0", date=DAY0, **kw):
    """Random dialogue whose ODES one-hot block agrees with ``odes``."""
    odes = np.full(n, 14) if odes is None else np.asarray(odes)
    n = len(odes)
    x = rng.normal(size=(n, FEATURE_DIM))
    x[:, :N_ODES] = np.eye(N_ODES)[odes - 1]
    return Dialogue(id=id, date=date, odes=odes, features=x, rating=rating, **kw)


def make_dataset(rng, n_dialogues=20, min_len=3, max_len=9, p_treated=0.4, n_days=5):
    out = []
    for i in range(n_dialogues):
        n = int(rng.integers(min_len, max_len + 1))
        odes = np.full(n, 14)
        if rng.random() < p_treated:
            odes[rng.integers(n)] = int(rng.integers(1, 14))
        out.append(
            make_dialogue(
                rng,
                odes=odes,
                rating=float(rng.uniform(1, 5)),
                id=f"d{i:03d}",
                date=DAY0 + dt.timedelta(days=int(rng.integers(n_days))),
            )
        )
    return Dataset(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def numeric_grad(f, params, step=1e-5):
    """Central differences of scalar ``f(params)`` for every entry of every array."""
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + step
            hi = f(params)
            p[i] = old - step
            lo = f(params)
            p[i] = old
            g[i] = (hi - lo) / (2 * step)
        out[name] = g
    return out


def max_rel_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# acceptance criteria outcomes, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
