import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from segloss.errors import FormatError, ValidationError
from segloss.experiment import config as C
from segloss.experiment.cli import main
from segloss.experiment.sweep import (
    CSV_COLUMNS,
    CellRecord,
    PatchSpec,
    SweepConfig,
    SweepGrid,
    cells,
    export_grid,
    grid_from_csv,
    grid_from_json,
    grid_to_csv,
    grid_to_json,
    load_grid,
    run_cell,
    run_sweep,
    sweep_config,
)
from segloss.experiment.tensorio import decode, encode, read_tensor, write_tensor
from segloss.synth import SynthConfig


# ---- SEGT tensors -------------------------------------------------------

def test_header_layout():
    data = encode(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert data[:4] == b"SEGT"
    assert data[4:7] == bytes([1, 1, 2])
    assert struct.unpack("<2I", data[7:15]) == (2, 3)
    assert len(data) == 15 + 6 * 4


@settings(max_examples=50)
@given(hnp.arrays(st.sampled_from([np.float32, np.float64]),
                  hnp.array_shapes(min_dims=0, max_dims=4, max_side=5)))
def test_tensor_round_trip(arr):
    data = encode(arr)
    back = decode(data)
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()
    assert encode(back) == data


def test_tensor_file_round_trip(tmp_path):
    arr = np.random.default_rng(0).normal(size=(3, 4, 5))
    path = tmp_path / "t.segt"
    write_tensor(path, arr)
    np.testing.assert_array_equal(read_tensor(path), arr)


def test_bad_magic():
    data = b"XXXX" + encode(np.zeros(2))[4:]
    with pytest.raises(FormatError, match="bad magic"):
        decode(data)


def test_truncated_payload():
    data = encode(np.zeros((2, 3)))[:-8]
    with pytest.raises(FormatError, match="truncated payload"):
        decode(data)


def test_unknown_dtype_and_version():
    data = bytearray(encode(np.zeros(2)))
    data[5] = 9
    with pytest.raises(FormatError, match="unknown dtype"):
        decode(bytes(data))
    data[5], data[4] = 2, 7
    with pytest.raises(FormatError, match="version"):
        decode(bytes(data))


def test_rank_limit():
    with pytest.raises(FormatError):
        encode(np.zeros((1, 1, 1, 1, 1)))


# ---- grids --------------------------------------------------------------

def sample_grid():
    recs = [
        CellRecord("wce", 1e-3, "S", 1, 0.123456789, 0.01, False),
        CellRecord("gdl_v", 1e-5, "L", 0, 0.5, 0.25, False),
        CellRecord("dl2", 1e-4, "M", 0, None, None, True),
        CellRecord("gdl_v", 1e-5, "L", 1, 0.75, 0.0, False),
    ]
    return SweepGrid(tuple(recs))


def test_csv_schema_and_sorting():
    text = grid_to_csv(sample_grid())
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 5
    assert lines[1] == "dl2,0.000100,M,0,,,true"
    assert lines[2].startswith("gdl_v,0.000010,L,0,0.500000")
    assert lines[4] == "wce,0.001000,S,1,0.123457,0.010000,false"


def test_csv_round_trip_is_byte_identical(tmp_path):
    text = grid_to_csv(sample_grid())
    assert grid_to_csv(grid_from_csv(text)) == text
    path = tmp_path / "grid.csv"
    export_grid(sample_grid(), path)
    export_grid(load_grid(path), tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_json_round_trip_is_byte_identical(tmp_path):
    text = grid_to_json(sample_grid())
    doc = json.loads(text)
    assert doc["columns"] == list(CSV_COLUMNS)
    assert len(doc["records"]) == 4
    assert grid_to_json(grid_from_json(text)) == text
    assert grid_to_json(grid_from_csv(grid_to_csv(grid_from_json(text)))) == text
    path = tmp_path / "grid.json"
    export_grid(sample_grid(), path)
    assert load_grid(path).records == grid_from_json(text).records


def test_malformed_grids():
    with pytest.raises(ValidationError):
        grid_from_csv("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        grid_from_json("{}")
    with pytest.raises(ValidationError):
        grid_to_csv(SweepGrid(()))


# ---- configs and sweeps -------------------------------------------------

def test_config_parsing():
    text = """
    # comment
    dims = 32x32
    fg_fraction = 0.02   # trailing comment
    learning_rates = 0.001, 0.0001
    patch_sizes = S:8x8:4, L:16x16:2
    losses = wce, gdl
    iterations = 250
    repeats = 2
    """
    cfg = sweep_config(C.parse_text(text))
    assert cfg.data.dims == (32, 32)
    assert cfg.learning_rates == (1e-3, 1e-4)
    assert cfg.patch_sizes == (PatchSpec("S", (8, 8), 4), PatchSpec("L", (16, 16), 2))
    assert cfg.losses == ("wce", "gdl_v")
    assert len(cells(cfg)) == 2 * 2 * 2 * 2


def test_config_errors():
    with pytest.raises(ValidationError, match="unknown config key"):
        sweep_config({"colour": "blue"})
    with pytest.raises(ValidationError, match="line 1"):
        C.parse_text("no equals sign")
    with pytest.raises(ValidationError, match="duplicate"):
        C.parse_text("a=1\na=2")
    with pytest.raises(ValidationError, match="exceed"):
        SweepConfig(iterations=100)
    with pytest.raises(ValidationError, match="learning_rates"):
        sweep_config({"learning_rates": "1e-3, fast"})


def test_3d_defaults_switch_on_dims():
    cfg = sweep_config({"dims": "48x48x48"})
    assert cfg.iterations == 3000
    assert cfg.patch_sizes[0].dims == (16, 16, 16)


def test_default_sweep_cardinality():
    assert len(cells(SweepConfig())) == 4 * 3 * 3 * 3


TINY = SweepConfig(
    learning_rates=(1e-3, 1e-4), losses=("wce", "gdl_v"),
    patch_sizes=(PatchSpec("S", (8, 8), 2), PatchSpec("L", (16, 16), 1)),
    iterations=30, repeats=2, stats_window=10,
    data=SynthConfig(dims=(24, 24), target_fg_fraction=0.03, lesion_radius_range=(1.5, 3),
                     noise_sigma=0.2))


def test_sweep_records_and_determinism():
    a = run_sweep(TINY)
    b = run_sweep(TINY)
    assert len(a) == 2 * 2 * 2 * 2
    assert grid_to_csv(a) == grid_to_csv(b)
    assert all(r.diverged or 0 <= r.median_dsc <= 1 for r in a.records)


def test_cells_are_independent():
    full = run_sweep(TINY)
    reduced = SweepConfig(**{**TINY.__dict__, "losses": ("gdl_v",), "learning_rates": (1e-4,)})
    for rec in run_sweep(reduced).records:
        assert rec in full.records


def test_parallel_sweep_matches_serial():
    parallel = SweepConfig(**{**TINY.__dict__, "workers": 2, "repeats": 1})
    serial = SweepConfig(**{**TINY.__dict__, "workers": 1, "repeats": 1})
    assert grid_to_csv(run_sweep(parallel)) == grid_to_csv(run_sweep(serial))


def test_divergent_cell_is_flagged_not_fatal():
    cfg = SweepConfig(**{**TINY.__dict__, "optimizer": "sgd", "learning_rates": (1e300,)})
    rec = run_cell(cfg, cells(cfg)[0])
    assert rec.diverged and rec.median_dsc is None
    assert "true" in grid_to_csv(SweepGrid((rec,)))


# ---- CLI ----------------------------------------------------------------

@pytest.fixture
def fields(tmp_path):
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 2, (6, 5)).astype(np.float64)
    p_fg = rng.uniform(0.1, 0.9, (6, 5))
    pred = np.stack([1 - p_fg, p_fg], axis=-1)
    write_tensor(tmp_path / "pred.segt", pred)
    write_tensor(tmp_path / "ref.segt", labels)
    write_tensor(tmp_path / "bad.segt", labels[:4])
    return tmp_path


def test_cli_loss_eval(fields, capsys):
    code = main(["loss", "eval", "--loss", "gdl", "--pred", str(fields / "pred.segt"),
                 "--ref", str(fields / "ref.segt")])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["loss"] == "gdl_v" and 0 <= out["value"] <= 1 and out["grad_norm"] > 0


def test_cli_loss_eval_shape_mismatch(fields, capsys):
    code = main(["loss", "eval", "--loss", "ss", "--pred", str(fields / "pred.segt"),
                 "--ref", str(fields / "bad.segt")])
    assert code == 1
    err = capsys.readouterr().err
    assert "(6, 5, 2)" in err and "(4, 5)" in err


def test_cli_exit_codes(fields, tmp_path, capsys):
    assert main(["loss", "eval", "--bogus"]) == 1
    assert main(["loss", "eval", "--loss", "wce", "--pred", str(tmp_path / "missing.segt"),
                 "--ref", str(fields / "ref.segt")]) == 3
    (tmp_path / "junk.segt").write_bytes(b"XXXX\x01\x02\x00")
    assert main(["loss", "eval", "--loss", "wce", "--pred", str(tmp_path / "junk.segt"),
                 "--ref", str(fields / "ref.segt")]) == 3
    assert main(["gradcheck", "--loss", "focal"]) == 1


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--loss", "gdl", "--seeds", "20", "--tol", "1e-5"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2
    assert main(["gradcheck", "--loss", "ss", "--seeds", "3", "--tol", "1e-30"]) == 2


def test_cli_synth_train_sweep(tmp_path, capsys):
    cfg = tmp_path / "data.cfg"
    cfg.write_text("dims = 24x24\nfg_fraction = 0.03\nradius_min = 1.5\nradius_max = 3\n")
    assert main(["synth", "gen", "--config", str(cfg), "--out", str(tmp_path / "v.segt")]) == 0
    vol = read_tensor(tmp_path / "v.segt")
    assert vol.shape == (2, 24, 24)
    assert set(np.unique(vol[1])) <= {0.0, 1.0}

    tcfg = tmp_path / "train.cfg"
    tcfg.write_text(cfg.read_text() + "iterations = 40\npatch = 12x12\nbatch = 2\nloss = dl2\n")
    assert main(["train", "--config", str(tcfg), "--trace", str(tmp_path / "t.csv")]) == 0
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "iteration,loss,dsc" and len(rows) == 41

    scfg = tmp_path / "sweep.cfg"
    scfg.write_text(cfg.read_text() + "iterations = 30\nstats_window = 10\nrepeats = 1\n"
                    "learning_rates = 0.001\npatch_sizes = S:8x8:2\nlosses = wce, ss\n")
    assert main(["sweep", "--config", str(scfg), "--out", str(tmp_path / "g.csv")]) == 0
    assert len((tmp_path / "g.csv").read_text().splitlines()) == 3
    assert main(["sweep", "--config", str(scfg), "--out", str(tmp_path / "g.json")]) == 0
    assert len(json.loads((tmp_path / "g.json").read_text())["records"]) == 2


def test_cli_train_divergence_exit_code(tmp_path, capsys):
    tcfg = tmp_path / "train.cfg"
    tcfg.write_text("dims = 24x24\nfg_fraction = 0.03\nradius_min = 1.5\nradius_max = 3\n"
                    "iterations = 20\npatch = 12x12\noptimizer = sgd\nlearning_rate = 1e300\nloss = wce\n")
    assert main(["train", "--config", str(tcfg), "--trace", str(tmp_path / "t.csv")]) == 2


def test_cli_bad_config_value(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("dims = 24x24\nfg_fraction = lots\n")
    assert main(["synth", "gen", "--config", str(cfg), "--out", str(tmp_path / "v.segt")]) == 1
