import numpy as np
import pytest

from ppn import memory as memory_mod
from ppn import synth
from ppn.data import Dataset, PatientRecord, prepare, split
from ppn.model import Architecture, Model


def make_record(rid="p0", t=3, n=2, m=2, label=0, seed=0, sparse=False):
    rng = np.random.default_rng(seed)
    dynamic = rng.normal(size=(t, n))
    mask = np.ones((t, n), dtype=bool)
    if sparse:
        mask = rng.random((t, n)) < 0.6
        dynamic = np.where(mask, dynamic, np.nan)
    return PatientRecord(id=rid, dynamic=dynamic, mask=mask,
                         static=rng.normal(size=m), label=label)


def make_dataset(n_records=12, t_max=6, n=2, m=2, seed=0):
    rng = np.random.default_rng(seed)
    recs = [make_record(f"p{i:03d}", t=int(rng.integers(1, t_max + 1)), n=n, m=m,
                        label=int(i % 2), seed=seed + i)
            for i in range(n_records)]
    names = [f"ind{j}" for j in range(n)]
    stat = [f"stat{j}" for j in range(m)]
    return Dataset(recs, names, stat)


@pytest.fixture
def tiny_dataset():
    return make_dataset()


@pytest.fixture
def tiny_model(tiny_dataset):
    """Small initialized model with prototypes snapped to real embeddings."""
    ds, _ = prepare(tiny_dataset)
    arch = Architecture(indicator_names=ds.indicator_names, static_names=ds.static_names,
                        k=3, hidden=4)
    model = Model(arch, seed=0)
    ids, flats = model.embed_all(ds.records)
    memory_mod.progressive_select(model.memory, flats, ids, epoch=0, seed=0)
    return model, ds


@pytest.fixture(scope="session")
def synth_splits():
    """Shared small synthetic splits for the slower training-path tests."""
    ds = synth.default_dataset(n_patients=160, seed=5)
    tr, va, te = split(ds, (0.6, 0.2, 0.2), seed=5)
    tr_n, stats = prepare(tr)
    va_n, _ = prepare(va, stats=stats)
    te_n, _ = prepare(te, stats=stats)
    return tr_n, va_n, te_n, te
