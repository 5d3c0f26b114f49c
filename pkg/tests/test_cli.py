"""Command-line behaviour: verb chaining and exit-code contract."""

import numpy as np
import pytest

from ctbridge.arrayio import load_array, save_array
from ctbridge.cli import main

CONFIG = """
[geometry]
image_size = 32
n_views = 24

[incompleteness]
kind = sparse_view
stride = 3

[phantom]
size = 32

[sampler]
nfe = 4
gamma = 0
cg_iters = 2
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(CONFIG)
    return str(path)


def run(*argv):
    return main(list(argv))


class TestVerbChain:
    def test_stagewise_chain_reconstructs(self, tmp_path, config_path):
        ph = str(tmp_path / "ph.bin")
        sino = str(tmp_path / "sino.bin")
        yraw = str(tmp_path / "y.bin")
        recon = str(tmp_path / "recon.bin")
        bridge = str(tmp_path / "bridge.bin")

        assert run("phantom", "--kind", "shepp_logan", "--size", "32",
                   "--out", ph) == 0
        assert run("project", "--config", config_path, "--in", ph,
                   "--out", sino) == 0
        assert run("corrupt", "--config", config_path, "--in", sino,
                   "--out", yraw) == 0
        assert run("fbp", "--config", config_path, "--in", yraw,
                   "--out", recon) == 0
        assert run("sample", "--config", config_path, "--y", yraw,
                   "--fbp", recon, "--out", bridge) == 0
        assert run("evaluate", "--in", bridge, "--ref", ph) == 0
        assert load_array(bridge).shape == (32, 32)

    def test_run_verb_writes_csv(self, tmp_path, config_path):
        out = tmp_path / "out"
        assert run("run", "--config", config_path, "--out", str(out)) == 0
        assert (out / "metrics.csv").exists()

    def test_sweep_verb_writes_csv(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(CONFIG + "[sweep]\nparameter = nfe\nvalues = 2, 4\n")
        out = tmp_path / "sweep"
        assert run("sweep", "--config", str(path), "--out", str(out)) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_verify_verb_passes(self, capsys):
        assert run("verify") == 0
        out = capsys.readouterr().out
        assert "PASS projector_adjoint" in out
        assert "FAIL" not in out

    def test_phantom_pgm_preview(self, tmp_path):
        ph = tmp_path / "ph.bin"
        pgm = tmp_path / "ph.pgm"
        assert run("phantom", "--size", "32", "--out", str(ph),
                   "--pgm", str(pgm)) == 0
        assert pgm.read_bytes().startswith(b"P5\n32 32\n255\n")

    def test_sample_seed_override_changes_output(self, tmp_path, config_path):
        """With gamma > 0 the --seed flag must reach the noise stream."""
        path = tmp_path / "noisy.ini"
        path.write_text(CONFIG.replace("gamma = 0", "gamma = 2"))
        ph, sino = str(tmp_path / "ph.bin"), str(tmp_path / "s.bin")
        yraw, recon = str(tmp_path / "y.bin"), str(tmp_path / "r.bin")
        run("phantom", "--size", "32", "--out", ph)
        run("project", "--config", str(path), "--in", ph, "--out", sino)
        run("corrupt", "--config", str(path), "--in", sino, "--out", yraw)
        run("fbp", "--config", str(path), "--in", yraw, "--out", recon)
        outs = []
        for seed in (1, 2, 1):
            out = str(tmp_path / f"b{len(outs)}.bin")
            assert run("sample", "--config", str(path), "--y", yraw,
                       "--fbp", recon, "--seed", str(seed),
                       "--out", out) == 0
            outs.append(load_array(out))
        assert np.array_equal(outs[0], outs[2])
        assert not np.array_equal(outs[0], outs[1])


class TestExitCodes:
    def test_missing_config_is_2(self, tmp_path):
        code = run("project", "--config", str(tmp_path / "none.ini"),
                   "--in", "x", "--out", "y")
        assert code == 2

    def test_bad_config_key_is_2(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[sampler]\nbogus = 1\n")
        code = run("project", "--config", str(path), "--in", "x", "--out", "y")
        assert code == 2

    def test_shape_mismatch_is_2(self, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_array(a, np.zeros((8, 8)))
        save_array(b, np.zeros((4, 4)))
        assert run("evaluate", "--in", str(a), "--ref", str(b)) == 2

    def test_corrupt_array_file_is_2(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not an array")
        ref = tmp_path / "ref.bin"
        save_array(ref, np.zeros((8, 8)))
        assert run("evaluate", "--in", str(bad), "--ref", str(ref)) == 2

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_numeric_failure_is_3(self, tmp_path, config_path):
        """A predictor that multiplies by 1e300 overflows within a few
        steps; the sampler's finiteness guard must map to exit code 3."""
        from ctbridge.arrayio import save_array as save
        save(tmp_path / "m.bin", np.eye(32) * 1e300)
        path = tmp_path / "huge.ini"
        path.write_text(CONFIG + "[predictor]\nkind = affine_files\n"
                        "matrix_file = m.bin\n")
        ph, sino = str(tmp_path / "ph.bin"), str(tmp_path / "s.bin")
        yraw, recon = str(tmp_path / "y.bin"), str(tmp_path / "r.bin")
        run("phantom", "--size", "32", "--out", ph)
        run("project", "--config", str(path), "--in", ph, "--out", sino)
        run("corrupt", "--config", str(path), "--in", sino, "--out", yraw)
        run("fbp", "--config", str(path), "--in", yraw, "--out", recon)
        code = run("sample", "--config", str(path), "--y", yraw,
                   "--fbp", recon, "--out", str(tmp_path / "b.bin"))
        assert code == 3
