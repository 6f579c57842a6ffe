import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invkern.data import GenConfig, gen_orbit_dataset, ingest_embeddings, load_dataset, save_dataset
from invkern.errors import ChecksumError, ConfigError, FormatError
from invkern.formats import write_matrix, write_matrix_csv
from invkern.group import BUILTIN_KINDS, GroupSpec, make_group
from invkern.kernels import BaseKernel
from invkern.mmif import InvariantFeatureMap, assign_tasks, match_score, train_mmif


def cfg(**kw):
    base = dict(num_classes=6, dim=8, group=GroupSpec("cyclic_shift", 8), seed=0)
    base.update(kw)
    return GenConfig(**base)


def test_full_orbits_in_template_split():
    ds = gen_orbit_dataset(cfg(num_classes=4))
    t = ds["template_unlabeled"]
    counts = np.bincount(t.orbit_ids)
    assert set(counts[counts > 0]) == {8}
    assert t.class_ids is None


def test_generation_is_bit_identical():
    a, b = gen_orbit_dataset(cfg(noise_sigma=0.1)), gen_orbit_dataset(cfg(noise_sigma=0.1))
    assert a.equals(b)
    assert not a.equals(gen_orbit_dataset(cfg(noise_sigma=0.1, seed=1)))


@pytest.mark.parametrize("kind", BUILTIN_KINDS)
def test_orbit_coverage_and_unit_norm(kind):
    c = cfg(group=GroupSpec(kind, 16), dim=16, num_classes=9)
    ds = gen_orbit_dataset(c)
    G = make_group(c.group)
    t = ds["template_unlabeled"]
    for oid in np.unique(t.orbit_ids):
        rows = t.samples[t.orbit_ids == oid]
        base = rows[t.element_ids[t.orbit_ids == oid] == G.identity_index][0]
        assert {r.tobytes() for r in rows} == {r.tobytes() for r in G.orbit(base)}
    for s in ds.splits.values():
        assert np.all(np.abs(np.linalg.norm(s.samples, axis=1) - 1.0) <= 1e-12)


def test_splits_are_class_disjoint():
    ds = gen_orbit_dataset(cfg(num_classes=12))
    t = set(ds["template_unlabeled"].orbit_ids.tolist())
    lab = set(ds["labeled_train"].class_ids.tolist())
    te = set(ds["test"].class_ids.tolist())
    assert not (t & lab) and not (t & te) and not (lab & te)


def test_labeled_split_is_untransformed():
    ds = gen_orbit_dataset(cfg(num_classes=12, samples_per_class_labeled=2))
    ident = make_group(GroupSpec("cyclic_shift", 8)).identity_index
    assert np.all(ds["labeled_train"].element_ids == ident)


def test_invalid_configs():
    with pytest.raises(ConfigError):
        cfg(num_classes=1)
    with pytest.raises(ConfigError):
        cfg(noise_sigma=-0.1)
    with pytest.raises(ConfigError):
        cfg(split_fractions=(0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        cfg(dim=9)


def test_separability_is_reported():
    sep = gen_orbit_dataset(cfg(num_classes=20, dim=64, group=GroupSpec("cyclic_shift", 64))).provenance["separability"]
    assert sep["max_orbit_cross_cosine"] < 1.0
    assert sep["max_base_cosine"] <= sep["max_orbit_cross_cosine"]


def test_noiseless_test_rows_match_their_class_exactly():
    c = cfg(num_classes=12, disjoint_classes=False, samples_per_class_test=3)
    ds = gen_orbit_dataset(c)
    lab, te = ds["labeled_train"], ds["test"]
    fmap = InvariantFeatureMap(BaseKernel("rbf").fitted(lab.samples), ds.template_set())
    ex = train_mmif(fmap.transform(lab.samples), lab.class_ids, assign_tasks(lab.class_ids, 8), feature_map=fmap)
    L, T = ex.transform(lab.samples), ex.transform(te.samples)
    for r in range(len(te)):
        j = int(np.flatnonzero(lab.class_ids == te.class_ids[r])[0])
        assert match_score(T[r], L[j]) == pytest.approx(1.0, abs=1e-10)


def test_save_load_round_trip(tmp_path):
    ds = gen_orbit_dataset(cfg(noise_sigma=0.05))
    save_dataset(ds, tmp_path / "d")
    assert load_dataset(tmp_path / "d").equals(ds)


def test_truncated_file_fails_checksum(tmp_path):
    save_dataset(gen_orbit_dataset(cfg()), tmp_path / "d")
    f = tmp_path / "d" / "test.gram"
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(ChecksumError):
        load_dataset(tmp_path / "d")


def test_version_bump_is_explicit(tmp_path):
    save_dataset(gen_orbit_dataset(cfg()), tmp_path / "d")
    m = tmp_path / "d" / "manifest.json"
    data = json.loads(m.read_text())
    data["version"] += 1
    m.write_text(json.dumps(data))
    with pytest.raises(FormatError, match="version"):
        load_dataset(tmp_path / "d")


def _write_embeddings(tmp_path, n=100, d=4096, labels=None, binary=True):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, d))
    labels = labels if labels is not None else [f"id{i % 10}" for i in range(n)]
    mp = tmp_path / ("emb.gram" if binary else "emb.csv")
    (write_matrix if binary else write_matrix_csv)(mp, X)
    lp = tmp_path / "labels.txt"
    lp.write_text("\n".join(labels) + "\n")
    return mp, lp


def test_ingest_shape_and_orbits(tmp_path):
    mp, lp = _write_embeddings(tmp_path)
    man = {"dim": "auto", "split": {"template_unlabeled": ["id0", "id1", "id2", "id3"],
                                    "labeled_train": ["id4", "id5", "id6"], "*": "test"},
           "orbit_group_by": "label"}
    ds = ingest_embeddings(mp, lp, man)
    assert ds.dim == 4096
    assert len(np.unique(ds["template_unlabeled"].orbit_ids)) == 4
    assert len(ds.template_set().orbits) == 4
    assert len(ds["test"]) == 30


def test_ingest_fifty_explicit_orbits(tmp_path):
    labels = [f"p{i // 2}" for i in range(120)]
    mp, lp = _write_embeddings(tmp_path, n=120, d=8, labels=labels, binary=False)
    tpl = [f"p{i}" for i in range(50)]
    man = {"dim": 8, "split": {"template_unlabeled": tpl, "*": "labeled_train"}, "orbit_group_by": "label"}
    ds = ingest_embeddings(mp, lp, man)
    assert len(ds.template_set().orbits) == 50


def test_ingest_errors(tmp_path):
    mp, lp = _write_embeddings(tmp_path, n=100, d=6)
    lp.write_text("\n".join(f"id{i}" for i in range(99)) + "\n")
    man = {"dim": "auto", "split": {"*": "test"}, "orbit_group_by": "label"}
    with pytest.raises(FormatError):
        ingest_embeddings(mp, lp, man)
    with pytest.raises(ConfigError):
        ingest_embeddings(mp, lp, {"dim": "auto"})
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0,nan\n2.0,3.0\n")
    lp.write_text("a\nb\n")
    with pytest.raises(FormatError):
        ingest_embeddings(bad, lp, man)


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_disjointness_property(n, seed):
    c = cfg(num_classes=max(n, 6), seed=seed)
    ds = gen_orbit_dataset(c)
    sets = [set(ds["template_unlabeled"].orbit_ids.tolist()), set(ds["labeled_train"].class_ids.tolist()),
            set(ds["test"].class_ids.tolist())]
    assert sum(len(s) for s in sets) == len(set().union(*sets)) == c.num_classes
