import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_iswap.hamiltonians import ControlLayout, LayoutKind
from robust_iswap.objectives import cost
from robust_iswap.propagation import evolve_unitary
from robust_iswap.pulses import (Chebyshev, FrameAngles, PiecewiseConstant, Pulse,
                                 PulseSchemaError, PulseValueError, PulseVersionError,
                                 canonicalize, chebyshev_eval, chebyshev_matrix, native_pulse,
                                 pulse_from_dict, pulse_to_dict, read_pulse, sample_to_piecewise,
                                 write_pulse, write_waveform_csv)

LOCAL = ControlLayout(LayoutKind.FULL_LOCAL)
DETUNED = ControlLayout(LayoutKind.DETUNED, delta=2.0)


def cheb_pulse(coeffs, layout=LOCAL, duration=4.5, **meta):
    return Pulse(layout, duration, Chebyshev(coeffs), FrameAngles.identity(layout.n_frames), meta)


def assert_same(a: Pulse, b: Pulse):
    assert a.layout == b.layout
    assert a.duration == b.duration
    assert type(a.basis) is type(b.basis)
    arr = lambda p: p.basis.values if p.is_piecewise else p.basis.coeffs
    np.testing.assert_array_equal(arr(a), arr(b))
    assert a.frames == b.frames
    assert a.metadata == b.metadata


class TestChebyshev:
    def test_t1_center(self):
        assert chebyshev_eval([0, 1], 2.0, 4.0) == 0.0

    def test_t2_center(self):
        assert chebyshev_eval([0, 0, 1], 2.0, 4.0) == -1.0

    def test_end_point(self):
        assert chebyshev_eval([1, 1, 1], 4.0, 4.0) == 3.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            chebyshev_eval([1.0], 5.0, 4.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 64), st.floats(0, 1))
    def test_clenshaw_matches_recurrence(self, seed, order, frac):
        c = np.random.default_rng(seed).normal(size=order + 1)
        x = 2 * frac - 1
        t_prev, t_cur, direct = 1.0, x, c[0]
        for n in range(1, order + 1):
            direct += c[n] * t_cur
            t_prev, t_cur = t_cur, 2 * x * t_cur - t_prev
        assert abs(chebyshev_eval(c, frac * 3.0, 3.0) - direct) < 1e-12 * max(1, np.abs(c).sum())

    def test_constant(self):
        p = cheb_pulse(np.array([[0.7], [0.1], [0.2], [-0.3]]))
        vals = p.channel_values(10)
        np.testing.assert_array_equal(vals, np.repeat([[0.7], [0.1], [0.2], [-0.3]], 10, axis=1))

    def test_linear_midpoints(self):
        np.testing.assert_allclose(chebyshev_matrix(1, 4)[1], [-0.75, -0.25, 0.25, 0.75],
                                   atol=1e-15)

    def test_default_grid_follows_metadata(self):
        p = cheb_pulse(np.zeros((4, 3)), sampling_steps=37)
        assert p.channel_values().shape == (4, 37)
        assert cheb_pulse(np.zeros((4, 3))).n_steps() == 1000

    def test_grid_convergence(self):
        coeffs = np.array([[1.0, 0.5, -0.3, 0.1], [0.2, 0.4, 0.0, -0.2],
                           [-0.5, 0.3, 0.2, 0.0], [0.0, -0.6, 0.1, 0.3]])
        p = cheb_pulse(coeffs)
        f = [cost(p, steps=n).fidelity for n in (250, 500, 1000, 2000)]
        d = np.abs(np.diff(f))
        # midpoint sampling is second order: each halving of dt quarters the change
        np.testing.assert_allclose(d[:-1] / d[1:], 4.0, rtol=0.05)
        assert d[-1] < 1e-6


class TestCanonicalize:
    def test_flips_negative_amplitudes(self):
        rng = np.random.default_rng(3)
        p = cheb_pulse(rng.normal(size=(4, 6)) * 2)
        c = canonicalize(p, 200)
        assert np.all(c.basis.values[[0, 2]] >= 0)
        np.testing.assert_allclose(evolve_unitary(c), evolve_unitary(p, steps=200), atol=1e-10)

    def test_sample_to_piecewise(self):
        p = cheb_pulse(np.ones((4, 2)))
        s = sample_to_piecewise(p, 8)
        assert s.is_piecewise and s.basis.steps == 8
        assert s.metadata["sampling_steps"] == 8
        assert sample_to_piecewise(s) is s


class TestValidation:
    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="channels"):
            Pulse(LOCAL, 1.0, PiecewiseConstant(np.zeros((2, 3))), FrameAngles.identity(2))

    def test_frame_mismatch(self):
        with pytest.raises(ValueError, match="frame"):
            Pulse(LOCAL, 1.0, PiecewiseConstant(np.zeros((4, 3))), FrameAngles.identity(1))

    def test_negative_duration(self):
        with pytest.raises(ValueError):
            Pulse(DETUNED, -1.0, PiecewiseConstant(np.zeros((2, 1))))

    def test_bad_frames(self):
        with pytest.raises(ValueError):
            FrameAngles(((0.0, 0.0),))
        with pytest.raises(ValueError):
            FrameAngles(((np.nan, 0.0, 0.0),))

    def test_native(self):
        p = native_pulse()
        assert p.duration == pytest.approx(np.pi / 2)
        assert p.metadata["protocol"] == "native"


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestFiles:
    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(["global", "full-local", "detuned"]),
           st.booleans(), st.integers(1, 6), st.floats(0.01, 50), st.data())
    def test_round_trip(self, kind, piecewise, n, duration, data):
        layout = ControlLayout(LayoutKind(kind), delta=2.5 if kind == "detuned" else 0.0)
        arr = np.array(data.draw(st.lists(st.lists(finite, min_size=n, max_size=n),
                                          min_size=layout.n_channels, max_size=layout.n_channels)))
        frames = FrameAngles(tuple(tuple(data.draw(st.lists(finite, min_size=3, max_size=3)))
                                   for _ in range(layout.n_frames)))
        basis = PiecewiseConstant(arr) if piecewise else Chebyshev(arr)
        p = Pulse(layout, duration, basis, frames, {"note": "x", "cost": 1e-11})
        text = json.dumps(pulse_to_dict(p))
        assert_same(pulse_from_dict(json.loads(text)), p)

    def test_file_round_trip(self, tmp_path):
        p = cheb_pulse(np.random.default_rng(4).normal(size=(4, 21)), seed=3)
        write_pulse(p, tmp_path / "p.json")
        assert_same(read_pulse(tmp_path / "p.json"), p)

    def test_field_order(self, tmp_path):
        write_pulse(native_pulse(), tmp_path / "p.json")
        doc = json.loads((tmp_path / "p.json").read_text())
        assert list(doc) == ["version", "layout", "duration", "basis", "frames", "metadata"]

    def test_zero_duration_not_written(self, tmp_path):
        p = Pulse(DETUNED, 0.0, PiecewiseConstant(np.zeros((2, 1))))
        with pytest.raises(PulseSchemaError):
            write_pulse(p, tmp_path / "p.json")

    @pytest.mark.parametrize("duration", [0.0, -2.0])
    def test_bad_duration(self, duration):
        doc = pulse_to_dict(native_pulse())
        doc["duration"] = duration
        with pytest.raises(PulseSchemaError):
            pulse_from_dict(doc)

    def test_version(self):
        doc = pulse_to_dict(native_pulse())
        doc["version"] = "2"
        with pytest.raises(PulseVersionError):
            pulse_from_dict(doc)

    def test_non_finite(self, tmp_path):
        doc = pulse_to_dict(native_pulse())
        text = json.dumps(doc).replace('"omega": [0.0]', '"omega": [NaN]')
        (tmp_path / "p.json").write_text(text)
        with pytest.raises(PulseValueError):
            read_pulse(tmp_path / "p.json")

    def test_missing_field(self):
        doc = pulse_to_dict(native_pulse())
        del doc["basis"]
        with pytest.raises(PulseSchemaError, match="basis"):
            pulse_from_dict(doc)

    def test_wrong_channels(self):
        doc = pulse_to_dict(native_pulse())
        doc["basis"]["values"] = {"omega1": [0.0], "phi1": [0.0]}
        with pytest.raises(PulseSchemaError):
            pulse_from_dict(doc)

    def test_not_json(self, tmp_path):
        (tmp_path / "p.json").write_text("{")
        with pytest.raises(PulseSchemaError):
            read_pulse(tmp_path / "p.json")

    def test_waveform_csv(self, tmp_path):
        p = Pulse(DETUNED, 2.0, PiecewiseConstant([[1.0, 2.0], [0.0, 0.5]]))
        write_waveform_csv(p, tmp_path / "w.csv")
        lines = (tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == "t,omega1,phi1,delta"
        assert lines[1].split(",") == ["0.5", "1", "0", "2"]
        assert len(lines) == 3
