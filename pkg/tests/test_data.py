import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wemf.data import (CYST, TUMOR, HounsfieldVolume, LabelVolume, PhantomConfig, generate_phantom,
                       make_splits, read_nrrd, slice_iter, write_nrrd)
from wemf.data.nrrd import NRRDError, UnsupportedNRRDError
from wemf.data.phantom import _grid, render_phantom
from wemf.data.rng import Rng, SplitMix64
from wemf.data.splits import read_manifest, write_manifest


def _payload(path):
    raw = path.read_bytes()
    return raw[raw.index(b"\n\n") + 2:]


def _write_header(path, lines, payload=b""):
    path.write_bytes(("\n".join(lines) + "\n\n").encode() + payload)


# -- NRRD -----------------------------------------------------------------------------

def test_nrrd_round_trip_int16(tmp_path):
    hu = np.random.default_rng(0).integers(-1024, 3072, size=(8, 8, 4)).astype(np.int16)
    write_nrrd(HounsfieldVolume(hu, (0.7, 0.7, 2.5)), tmp_path / "v.nrrd")
    back = read_nrrd(tmp_path / "v.nrrd")
    assert isinstance(back, HounsfieldVolume)
    assert back.hu.dtype == np.int16 and np.array_equal(back.hu, hu)


def test_nrrd_payload_sizes(tmp_path):
    write_nrrd(HounsfieldVolume(np.zeros((2, 2, 2), np.int16), (1, 1, 1)), tmp_path / "a.nrrd")
    assert len(_payload(tmp_path / "a.nrrd")) == 16
    write_nrrd(LabelVolume(np.ones((3, 4, 5), np.uint8)), tmp_path / "b.nrrd")
    assert len(_payload(tmp_path / "b.nrrd")) == 60
    assert b"type: uchar" in (tmp_path / "b.nrrd").read_bytes()


def test_nrrd_spacing_survives_exactly(tmp_path):
    write_nrrd(LabelVolume(np.zeros((2, 2, 2), np.uint8), (0.5, 0.5, 2.0)), tmp_path / "l.nrrd")
    assert read_nrrd(tmp_path / "l.nrrd").spacing_mm == (0.5, 0.5, 2.0)
    write_nrrd(HounsfieldVolume(np.zeros((2, 2, 2), np.int16), (0.1, 1 / 3, 2.7)), tmp_path / "h.nrrd")
    assert read_nrrd(tmp_path / "h.nrrd").spacing_mm == (0.1, 1 / 3, 2.7)


def test_nrrd_fortran_order_on_disk(tmp_path):
    hu = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
    write_nrrd(HounsfieldVolume(hu, (1, 1, 1)), tmp_path / "v.nrrd")
    on_disk = np.frombuffer(_payload(tmp_path / "v.nrrd"), "<i2")
    # x varies fastest
    assert list(on_disk[:3]) == [hu[0, 0, 0], hu[1, 0, 0], hu[0, 1, 0]]


def test_nrrd_payload_size_mismatch(tmp_path):
    p = tmp_path / "bad.nrrd"
    _write_header(p, ["NRRD0004", "type: short", "dimension: 3", "sizes: 4 4 4", "endian: little",
                      "encoding: raw"], b"\0" * 100)
    with pytest.raises(NRRDError, match="payload"):
        read_nrrd(p)


@pytest.mark.parametrize("line,field", [("encoding: gzip", "encoding"), ("endian: big", "endian"),
                                        ("type: float", "type"), ("dimension: 2", "dimension"),
                                        ("line skip: 2", "line skip")])
def test_nrrd_unsupported_features_name_the_field(tmp_path, line, field):
    base = {"type": "type: short", "dimension": "dimension: 3", "sizes": "sizes: 1 1 1",
            "endian": "endian: little", "encoding": "encoding: raw"}
    key = line.split(":")[0]
    base[key] = line
    p = tmp_path / "u.nrrd"
    _write_header(p, ["NRRD0004", *base.values()], b"\0\0")
    with pytest.raises(UnsupportedNRRDError) as err:
        read_nrrd(p)
    assert err.value.field == field
    assert field in str(err.value)


def test_nrrd_space_directions(tmp_path):
    p = tmp_path / "d.nrrd"
    _write_header(p, ["NRRD0004", "type: uchar", "dimension: 3", "sizes: 1 1 2", "space: left-posterior-superior",
                      "space directions: (0.8,0,0) (0,0.8,0) (0,0,-3)", "encoding: raw"], b"\1\2")
    vol = read_nrrd(p)
    assert vol.spacing_mm == (0.8, 0.8, 3.0)
    assert vol.labels[0, 0].tolist() == [1, 2]


def test_volume_validation():
    with pytest.raises(ValueError):
        HounsfieldVolume(np.full((2, 2, 2), 4000), (1, 1, 1))
    with pytest.raises(ValueError):
        HounsfieldVolume(np.zeros((2, 2)), (1, 1, 1))
    with pytest.raises(ValueError):
        HounsfieldVolume(np.zeros((2, 2, 2)), (1, 0, 1))
    with pytest.raises(ValueError):
        LabelVolume(np.full((2, 2, 2), 3))


@settings(max_examples=15, deadline=None)
@given(shape=st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)), seed=st.integers(0, 1000))
def test_nrrd_round_trip_property(tmp_path_factory, shape, seed):
    d = tmp_path_factory.mktemp("rt")
    rng = np.random.default_rng(seed)
    lab = LabelVolume(rng.integers(0, 3, size=shape), tuple(rng.uniform(0.1, 5, 3)))
    write_nrrd(lab, d / "l.nrrd")
    back = read_nrrd(d / "l.nrrd")
    assert np.array_equal(back.labels, lab.labels) and back.spacing_mm == lab.spacing_mm


# -- RNG ------------------------------------------------------------------------------------

def test_splitmix_reference_value():
    assert SplitMix64(0).next() == 0xE220A8397B1DCDAF


def test_rng_ranges_and_determinism():
    a, b = Rng(5), Rng(5)
    xs = [a.uniform() for _ in range(200)]
    assert xs == [b.uniform() for _ in range(200)]
    assert all(0.0 <= x < 1.0 for x in xs)
    ints = {a.integers(3, 6) for _ in range(200)}
    assert ints == {3, 4, 5}
    arr = Rng(1).normal_array((20000,))
    assert abs(arr.mean()) < 0.03 and abs(arr.std() - 1) < 0.03


# -- phantom --------------------------------------------------------------------------

def test_phantom_deterministic():
    cfg = PhantomConfig(seed=11, dims=(48, 48, 12))
    v1, l1 = generate_phantom(cfg)
    v2, l2 = generate_phantom(cfg)
    assert v1.hu.tobytes() == v2.hu.tobytes() and l1.labels.tobytes() == l2.labels.tobytes()
    v3, _ = generate_phantom(PhantomConfig(seed=12, dims=(48, 48, 12)))
    assert not np.array_equal(v1.hu, v3.hu)


@pytest.mark.parametrize("seed", range(5))
def test_cyst_interior_in_range_before_noise(seed):
    cfg = PhantomConfig(seed=seed, lesion_class="cyst", dims=(48, 48, 16))
    render = render_phantom(cfg)
    inside = render.clean_hu[render.labels == CYST]
    assert inside.size > 0
    assert inside.min() >= 0.0 and inside.max() <= 20.0
    assert not (render.labels == TUMOR).any()


@pytest.mark.parametrize("seed", range(4))
def test_lesion_volume_fraction(seed):
    cfg = PhantomConfig(seed=seed, dims=(64, 64, 64), spacing_mm=(1, 1, 1), radius_mm=(5, 10))
    _, lab = generate_phantom(cfg)
    frac = np.count_nonzero(lab.labels) / lab.labels.size
    assert 0.0002 < frac < 0.05


@pytest.mark.parametrize("seed", range(4))
def test_labels_inside_generating_ellipsoids(seed):
    cfg = PhantomConfig(seed=seed, dims=(48, 48, 12))
    render = render_phantom(cfg)
    X, Y, Z = _grid(cfg)
    covered = np.zeros(cfg.dims, dtype=bool)
    for les in render.lesions:
        m = les.contains(X, Y, Z)
        assert np.all(render.labels[m] == les.cls)
        covered |= m
    assert np.array_equal(covered, render.labels > 0)


def test_background_not_drawn_from_lesion_values():
    cfg = PhantomConfig(seed=3, dims=(48, 48, 12), lesion_class="tumor")
    render = render_phantom(cfg)
    base = {les.base_hu for les in render.lesions}
    bg = render.clean_hu[render.labels == 0]
    assert not np.isin(bg, list(base)).any()


def test_phantom_clamped_and_integer():
    v, _ = generate_phantom(PhantomConfig(seed=0, dims=(48, 48, 12), noise_std=3000.0))
    assert v.hu.min() >= -1024 and v.hu.max() <= 3071


def test_phantom_config_validation():
    with pytest.raises(ValueError):
        PhantomConfig(cyst_hu=(-5.0, 10.0)).validate()
    with pytest.raises(ValueError):
        PhantomConfig(radius_mm=(0.0, 4.0)).validate()
    with pytest.raises(ValueError):
        PhantomConfig(dims=(16, 16, 16), radius_mm=(5.0, 9.0)).validate()


# -- splits and slices --------------------------------------------------------------------------

def test_paper_split_sizes():
    ids = [f"case{i:03d}" for i in range(65)]
    m = make_splits(ids, (0.77, 0.08, 0.15), seed=0)
    assert (len(m.train), len(m.val), len(m.test)) == (50, 5, 10)
    assert sorted(m.train + m.val + m.test) == ids
    assert make_splits(ids, seed=0) == m
    assert make_splits(ids, seed=1) != m


def test_all_train_split():
    m = make_splits(["a", "b", "c"], (1, 0, 0))
    assert sorted(m.train) == ["a", "b", "c"] and m.val == [] and m.test == []


def test_split_errors():
    with pytest.raises(ValueError):
        make_splits(["a", "a"], (1, 0, 0))
    with pytest.raises(ValueError):
        make_splits(["a"], (0.5, 0.25, 0.25))
    with pytest.raises(ValueError):
        make_splits(["a", "b", "c"], (0.5, 0.5, 0.5))


def test_manifest_round_trip(tmp_path):
    m = make_splits([str(i) for i in range(10)], seed=4)
    cases = [{"id": str(i), "seed": i} for i in range(10)]
    write_manifest(tmp_path / "m.json", cases, m, generator="phantom")
    c2, m2, extra = read_manifest(tmp_path / "m.json")
    assert c2 == cases and m2 == m and extra == {"generator": "phantom"}
    assert m2.split_of(m.test[0]) == "test"


def test_slice_iter():
    hu = np.arange(256, dtype=np.int16).reshape(8, 8, 4)
    lab = (hu % 3).astype(np.uint8)
    pairs = list(slice_iter(HounsfieldVolume(hu, (0.5, 0.6, 2)), LabelVolume(lab)))
    assert len(pairs) == 4
    for k, (s, l) in enumerate(pairs):
        assert s.hu.shape == (8, 8) and s.index == k and s.spacing_mm == (0.5, 0.6)
        assert np.array_equal(s.hu, hu[:, :, k]) and np.array_equal(l, lab[:, :, k])
    assert np.array_equal(np.stack([s.hu for s, _ in pairs], axis=-1), hu)
    with pytest.raises(ValueError):
        list(slice_iter(HounsfieldVolume(hu, (1, 1, 1)), LabelVolume(lab[:, :, :2])))
