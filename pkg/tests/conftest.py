import numpy as np
import pytest

from mham.model import ModelConfig
from mham.tables import EncodedTable
from mham.training import init_params


def tiny_config(widths=(3, 4), n_types=3, vocab=12, variant="mham", dim=3, gru=4, **kw):
    return ModelConfig(attr_widths=widths, n_record_types=n_types, vocab_size=vocab,
                       variant=variant, attr_embed_dim=dim, record_type_embed_dim=dim,
                       gru_dim=gru, p_dim=kw.pop("p_dim", 3), dec_embed_dim=kw.pop("dec_dim", 3), **kw)


def random_table(rng, T, widths, n_types):
    types = np.zeros((T, n_types))
    types[np.arange(T), rng.integers(n_types, size=T)] = 1.0
    attrs = [rng.integers(0, 2, size=(T, w)).astype(float) for w in widths]
    return EncodedTable(attrs, types)


@pytest.fixture
def toy():
    """3-record, 2-attribute table, vocabulary of 12, freshly initialised tiny model."""
    rng = np.random.default_rng(2024)
    cfg = tiny_config()
    return cfg, init_params(cfg, seed=3), random_table(rng, 3, cfg.attr_widths, 3), [5, 9, 4, 11, 2]


# acceptance criteria register their verdict here; printed once at the end of the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
