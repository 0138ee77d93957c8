import numpy as np
import numpy.testing as npt
import pytest

from deepmusic import (
    ArrayConfig,
    CovMatrix,
    DatasetConfig,
    FileFormatError,
    SpectrumDataset,
    TruncatedFileError,
    UnsupportedVersionError,
    build_input_tensor,
    draw_doa_set,
    generate_dataset,
    label_spectra,
    make_grid,
    partition_grid,
    split_train_val,
    substream,
)

from oracles import naive_music_spectrum

M16 = ArrayConfig(16)
GRID = make_grid(-60.0, 60.0, 512)
PART = partition_grid(GRID, 8)


def small_config(**overrides):
    base = dict(
        grid=GRID,
        num_regions=8,
        num_sources=2,
        num_snapshots=50,
        snr_train_db=(20.0, 30.0),
        num_doa_sets=3,
        num_noise_draws=2,
        seed=5,
    )
    base.update(overrides)
    return DatasetConfig(**base)


def test_input_tensor_identity_covariance():
    tensor = build_input_tensor(CovMatrix(np.eye(4, dtype=complex)))
    npt.assert_array_equal(tensor.data[:, :, 0], np.eye(4))
    npt.assert_array_equal(tensor.data[:, :, 1], np.zeros((4, 4)))
    npt.assert_array_equal(tensor.data[:, :, 2], np.zeros((4, 4)))


def test_input_tensor_imaginary_entry():
    r = np.eye(3, dtype=complex)
    r[0, 1] = 1j
    r[1, 0] = -1j
    tensor = build_input_tensor(CovMatrix(r))
    assert tensor.data[0, 1, 0] == 0.0
    assert tensor.data[0, 1, 1] == 1.0
    npt.assert_allclose(tensor.data[0, 1, 2], np.pi / 2)


def test_input_tensor_round_trip_bit_exact():
    rng = np.random.default_rng(2)
    y = rng.standard_normal((8, 30)) + 1j * rng.standard_normal((8, 30))
    r = (y @ y.conj().T) / 30
    r = np.triu(r, 1) + np.triu(r, 1).conj().T + np.diag(np.real(np.diag(r)).astype(complex))
    tensor = build_input_tensor(CovMatrix(r))
    assert np.array_equal(tensor.covariance(), r)


def test_input_tensor_channel_symmetries_and_phase_range():
    src_rng = np.random.default_rng(7)
    y = src_rng.standard_normal((6, 20)) + 1j * src_rng.standard_normal((6, 20))
    r = (y @ y.conj().T) / 20
    r = np.triu(r, 1) + np.triu(r, 1).conj().T + np.diag(np.real(np.diag(r)).astype(complex))
    x = build_input_tensor(CovMatrix(r)).data
    npt.assert_array_equal(x[:, :, 0], x[:, :, 0].T)
    npt.assert_array_equal(x[:, :, 1], -x[:, :, 1].T)
    assert np.all(x[:, :, 2] > -np.pi)
    assert np.all(x[:, :, 2] <= np.pi)


def test_label_spectra_single_source_peaks_in_its_region():
    theta = GRID.angle_at(2 * PART.region_len + 30)  # interior of region 2
    labels = label_spectra([theta], PART, M16, np.eye(1, dtype=complex))
    assert labels.shape == (8, PART.region_len)
    assert int(np.argmax(labels[2])) == 30
    peak = labels[2].max()
    for region in range(8):
        if region != 2:
            assert labels[region].max() < peak


def test_label_concatenation_is_normalized_full_spectrum():
    theta = [-33.0, 21.0]
    labels = label_spectra(theta, PART, M16, np.eye(2, dtype=complex))
    flat = labels.reshape(-1)
    npt.assert_allclose(flat.sum(), 1.0, atol=1e-9)
    oracle = naive_music_spectrum(
        _exact_cov(theta), 2, GRID.angles(), 0.5
    )
    oracle = oracle / oracle.sum()
    npt.assert_allclose(flat, oracle, rtol=1e-6)


def _exact_cov(doas):
    from deepmusic import SourceConfig, ideal_covariance

    src = SourceConfig.uncorrelated(doas, noise_variance=0.0)
    return ideal_covariance(src, M16).data


def test_label_spectra_five_sources_in_five_regions():
    offsets = [10, 40, 25, 5, 60]
    regions = [0, 2, 4, 5, 7]
    doas = [GRID.angle_at(q * PART.region_len + off) for q, off in zip(regions, offsets)]
    labels = label_spectra(doas, PART, M16, np.eye(5, dtype=complex))
    for q, off in zip(regions, offsets):
        assert int(np.argmax(labels[q])) == off


def test_label_spectra_rejects_two_sources_in_one_region():
    lo, hi = PART.region_bounds[3]
    with pytest.raises(ValueError):
        label_spectra([lo + 1.0, lo + 2.0], PART, M16, np.eye(2, dtype=complex))


def test_label_spectra_coherent_pair_uses_smoothing():
    gamma = np.ones((2, 2), dtype=complex)
    doas = [-33.0, 21.0]
    labels = label_spectra(doas, PART, M16, gamma)
    flat = labels.reshape(-1)
    top_two = np.sort(np.argsort(flat)[-2:])
    expected = np.sort([GRID.index_of(t) for t in doas])
    assert np.all(np.abs(top_two - expected) <= 1)


def test_draw_doa_set_respects_guard_and_regions():
    rng = substream(3)
    for _ in range(50):
        doas = draw_doa_set(rng, PART, 3)
        assert np.all(np.diff(doas) > 0)
        regions = [PART.region_of(t) for t in doas]
        assert len(set(regions)) == 3
        for theta, region in zip(doas, regions):
            lo, hi = PART.region_bounds[region]
            guard = 2 * GRID.resolution_deg
            assert lo + guard <= theta <= hi - guard


def test_generate_dataset_minimal_counts():
    cfg = small_config(num_doa_sets=1, num_noise_draws=1, snr_train_db=(20.0,))
    ds = generate_dataset(cfg, M16)
    assert len(ds) == 1
    assert ds.inputs.shape == (1, 16, 16, 3)
    assert ds.labels.shape == (1, 8, 64)


def test_paper_scale_config_record_count():
    cfg = DatasetConfig(
        grid=make_grid(-60.0, 60.0, 4096),
        num_regions=8,
        num_sources=5,
        num_snapshots=500,
        snr_train_db=(15.0, 20.0, 25.0, 30.0),
        num_doa_sets=100,
        num_noise_draws=100,
        seed=1,
    )
    assert cfg.total_samples == 40000


def test_generate_dataset_deterministic_bytes(tmp_path):
    cfg = small_config()
    a = generate_dataset(cfg, M16)
    b = generate_dataset(cfg, M16)
    pa, pb = tmp_path / "a.dmds", tmp_path / "b.dmds"
    a.save(pa)
    b.save(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_generated_samples_satisfy_invariants():
    ds = generate_dataset(small_config(), M16)
    part = ds.partition()
    for i in range(len(ds)):
        sample = ds.sample(i)
        x = sample.input.data
        npt.assert_allclose(x[:, :, 0], x[:, :, 0].T, atol=1e-7)
        npt.assert_allclose(x[:, :, 1], -x[:, :, 1].T, atol=1e-7)
        assert np.all(x[:, :, 2] > -np.pi) and np.all(x[:, :, 2] <= np.pi)
        npt.assert_allclose(sample.labels.sum(), 1.0, atol=1e-5)
        for theta in sample.true_doas_deg:
            q = part.region_of(theta)
            within = int(np.argmax(sample.labels[q]))
            snapped = ds.grid.index_of(theta) - q * part.region_len
            assert abs(within - snapped) <= 1


def test_dataset_round_trip(tmp_path):
    ds = generate_dataset(small_config(), M16)
    path = tmp_path / "ds.dmds"
    ds.save(path)
    back = SpectrumDataset.load(path)
    assert back.array == ds.array
    assert back.grid == ds.grid
    assert back.snr_train_db == ds.snr_train_db
    assert back.seed == ds.seed
    assert back.num_snapshots == ds.num_snapshots
    assert np.array_equal(back.sample_ids, ds.sample_ids)
    assert np.array_equal(back.true_doas, ds.true_doas)
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.labels, ds.labels)


def test_dataset_load_errors(tmp_path):
    ds = generate_dataset(small_config(num_doa_sets=1), M16)
    path = tmp_path / "ds.dmds"
    ds.save(path)
    raw = path.read_bytes()

    truncated = tmp_path / "trunc.dmds"
    truncated.write_bytes(raw[: len(raw) - 50])
    with pytest.raises(TruncatedFileError):
        SpectrumDataset.load(truncated)

    bad_magic = tmp_path / "magic.dmds"
    bad_magic.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FileFormatError):
        SpectrumDataset.load(bad_magic)

    bad_version = tmp_path / "version.dmds"
    bad_version.write_bytes(raw[:4] + (99).to_bytes(2, "little") + raw[6:])
    with pytest.raises(UnsupportedVersionError):
        SpectrumDataset.load(bad_version)

    trailing = tmp_path / "trailing.dmds"
    trailing.write_bytes(raw + b"xx")
    with pytest.raises(FileFormatError):
        SpectrumDataset.load(trailing)


def test_split_sizes_and_union():
    ds = generate_dataset(small_config(num_doa_sets=5, num_noise_draws=1, snr_train_db=(20.0,)), M16)
    assert len(ds) == 5
    bigger = generate_dataset(small_config(num_doa_sets=5), M16)  # 5*2*2 = 20
    train, val = split_train_val(bigger, 0.8)
    assert len(train) == 16 and len(val) == 4
    merged = np.sort(np.concatenate([train.sample_ids, val.sample_ids]))
    npt.assert_array_equal(merged, bigger.sample_ids)
    order = np.argsort(np.concatenate([train.sample_ids, val.sample_ids]))
    inputs = np.concatenate([train.inputs, val.inputs])[order]
    assert np.array_equal(inputs, bigger.inputs)


def test_split_ten_samples():
    ds = generate_dataset(small_config(num_doa_sets=5, num_noise_draws=1), M16)  # 5*1*2 = 10
    train, val = split_train_val(ds, 0.8)
    assert len(train) == 8 and len(val) == 2


def test_split_is_deterministic_and_shared():
    ds = generate_dataset(small_config(), M16)
    t1, v1 = split_train_val(ds, 0.75)
    t2, v2 = split_train_val(ds, 0.75)
    assert np.array_equal(t1.sample_ids, t2.sample_ids)
    assert np.array_equal(v1.sample_ids, v2.sample_ids)


def test_split_validation():
    ds = generate_dataset(small_config(num_doa_sets=1, num_noise_draws=1, snr_train_db=(20.0,)), M16)
    with pytest.raises(ValueError):
        split_train_val(ds, 0.0)
    with pytest.raises(ValueError):
        split_train_val(ds, 1.0)
    with pytest.raises(ValueError):
        split_train_val(ds, 0.5)  # single record cannot land on both sides


def test_dataset_config_validation():
    with pytest.raises(ValueError):
        small_config(num_sources=9)
    with pytest.raises(ValueError):
        small_config(snr_train_db=())
    with pytest.raises(ValueError):
        small_config(seed=-1)
    with pytest.raises(ValueError):
        small_config(num_doa_sets=0)
