import io
import subprocess
import sys

import numpy as np
import pytest

from hummuss.cli import main
from hummuss.keypoints import KeypointFormatError, read_keypoints, read_pose3d, write_keypoints
from hummuss.model import HummussConfig, init_model
from hummuss.weights_io import save_weights


def _read(path):
    with open(path) as fh:
        return read_pose3d(fh)


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    causal = d / "causal.hmss"
    bi = d / "bi.hmss"
    save_weights(init_model(HummussConfig(n_blocks=2, d_m=16, d_rep=16, state_dim=8, causal=True), 1), causal)
    save_weights(init_model(HummussConfig(n_blocks=1, d_m=16, d_rep=16, state_dim=8), 1), bi)
    walk = d / "walk.csv"
    assert main(["synth", "--output", str(walk), "--joints", "5", "--frames", "40", "--seed", "3"]) == 0
    return d, causal, bi, walk


class TestKeypointFormat:
    def test_roundtrip(self):
        buf = io.StringIO()
        frames = np.random.default_rng(0).uniform(0, 1, (4, 3, 3))
        write_keypoints(buf, [0.0, 33.3, 66.7, 100.0], frames, 30)
        ts, back = read_keypoints(io.StringIO(buf.getvalue()))
        np.testing.assert_array_equal(back, frames)
        np.testing.assert_array_equal(ts, [0.0, 33.3, 66.7, 100.0])

    @pytest.mark.parametrize("body,line", [
        ("0,1,2,1\n10,1,2\n", 3),
        ("0,1,2,1\n0,1,2,1\n", 3),
        ("0,1,2,1\n5,a,2,1\n", 3),
        ("0,1,2,1.5\n", 2),
        ("0,1,nan,1\n", 2),
    ])
    def test_malformed(self, body, line):
        with pytest.raises(KeypointFormatError) as err:
            read_keypoints(io.StringIO("# joints=1 fps=30\n" + body))
        assert err.value.lineno == line

    def test_missing_header(self):
        with pytest.raises(KeypointFormatError):
            read_keypoints(io.StringIO("0,1,2,1\n"))


class TestInfer:
    def test_stream_matches_offline(self, files, tmp_path):
        _, causal, _, walk = files
        s, o = tmp_path / "s.csv", tmp_path / "o.csv"
        assert main(["infer", "--model", str(causal), "--input", str(walk), "--mode", "stream",
                     "--output", str(s)]) == 0
        assert main(["infer", "--model", str(causal), "--input", str(walk), "--mode", "offline",
                     "--output", str(o)]) == 0
        ts_s, ps = _read(s)
        ts_o, po = _read(o)
        assert ps.shape == (40, 5, 3)
        np.testing.assert_array_equal(ts_s, ts_o)
        assert np.max(np.abs(ps - po)) <= 1e-5

    def test_fps_adapt_off_matches_on_for_uniform_input(self, files, tmp_path):
        _, causal, _, walk = files
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["infer", "--model", str(causal), "--input", str(walk), "--output", str(a)])
        main(["infer", "--model", str(causal), "--input", str(walk), "--fps-adapt", "off", "--output", str(b)])
        np.testing.assert_allclose(_read(a)[1], _read(b)[1], atol=1e-12)

    def test_empty_input(self, files, tmp_path):
        _, causal, _, _ = files
        empty, out = tmp_path / "empty.csv", tmp_path / "out.csv"
        empty.write_text("")
        for mode in ("stream", "offline"):
            assert main(["infer", "--model", str(causal), "--input", str(empty), "--mode", mode,
                         "--output", str(out)]) == 0
            assert out.read_text() == ""

    def test_timestamp_regression(self, files, tmp_path, capsys):
        _, causal, _, walk = files
        lines = walk.read_text().splitlines()
        lines[7], lines[8] = lines[8], lines[7]
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(lines) + "\n")
        assert main(["infer", "--model", str(causal), "--input", str(bad), "--output", str(tmp_path / "x")]) == 2
        assert "line 9" in capsys.readouterr().err

    def test_stream_on_bidirectional(self, files, tmp_path):
        _, _, bi, walk = files
        assert main(["infer", "--model", str(bi), "--input", str(walk), "--mode", "stream",
                     "--output", str(tmp_path / "x")]) == 4
        assert main(["infer", "--model", str(bi), "--input", str(walk), "--mode", "offline",
                     "--output", str(tmp_path / "x")]) == 0

    def test_bad_weights(self, files, tmp_path):
        _, causal, _, walk = files
        broken = tmp_path / "broken.hmss"
        broken.write_bytes(causal.read_bytes()[:-10])
        assert main(["infer", "--model", str(broken), "--input", str(walk)]) == 3
        assert main(["infer", "--model", str(tmp_path / "nope.hmss"), "--input", str(walk)]) == 3

    def test_stdin_stdout(self, files):
        _, causal, _, walk = files
        proc = subprocess.run([sys.executable, "-m", "hummuss.cli", "infer", "--model", str(causal)],
                              input=walk.read_text(), capture_output=True, text=True, check=True)
        ts, poses = read_pose3d(io.StringIO(proc.stdout))
        assert poses.shape == (40, 5, 3)


class TestSubsampleEval:
    def test_csv(self, files, capsys):
        _, causal, _, walk = files
        assert main(["subsample-eval", "--model", str(causal), "--input", str(walk), "--rates", "1,2,4"]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert rows[0] == "rate,frames,mpjpe_vs_gt,dev_vs_fullrate"
        first = rows[1].split(",")
        assert first[:2] == ["1", "40"] and float(first[3]) == 0.0

    def test_missing_gt(self, files, tmp_path):
        _, causal, _, walk = files
        lonely = tmp_path / "lonely.csv"
        lonely.write_text(walk.read_text())
        assert main(["subsample-eval", "--model", str(causal), "--input", str(lonely)]) == 3

    def test_deterministic(self, files, capsys):
        _, causal, _, walk = files
        main(["subsample-eval", "--model", str(causal), "--input", str(walk)])
        first = capsys.readouterr().out
        main(["subsample-eval", "--model", str(causal), "--input", str(walk)])
        assert capsys.readouterr().out == first


class TestSynthAndInit:
    def test_seed_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HUMMUSS_SEED", "9")
        main(["synth", "--output", str(tmp_path / "a.csv"), "--frames", "5", "--joints", "3"])
        main(["synth", "--output", str(tmp_path / "b.csv"), "--frames", "5", "--joints", "3", "--seed", "9"])
        main(["synth", "--output", str(tmp_path / "c.csv"), "--frames", "5", "--joints", "3", "--seed", "1"])
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
        assert (tmp_path / "a.csv").read_text() != (tmp_path / "c.csv").read_text()

    def test_init_bad_config(self, tmp_path):
        assert main(["init", "--output", str(tmp_path / "m"), "--d-m", "10", "--n-expand", "9/4"]) == 3


class TestBenchCli:
    def test_bench_rejects_bidirectional(self, files):
        _, _, bi, _ = files
        assert main(["bench", "--model", str(bi), "--contexts", "3", "--frames", "2"]) == 4

    def test_bench_csv(self, files, capsys):
        _, causal, _, _ = files
        assert main(["bench", "--model", str(causal), "--contexts", "3,9", "--frames", "3", "--repeat", "1",
                     "--warmup", "1", "--joints", "4"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("# rewindow")
        assert out[1] == "mode,context_length,median_latency_us,p95_latency_us,state_bytes_or_window_bytes"
        rows = [r.split(",") for r in out[2:]]
        assert [(r[0], r[1]) for r in rows] == [("recurrent", "3"), ("rewindow", "3"),
                                                ("recurrent", "9"), ("rewindow", "9")]
        assert rows[0][4] == rows[2][4]
        assert int(rows[3][4]) == 3 * int(rows[1][4])
