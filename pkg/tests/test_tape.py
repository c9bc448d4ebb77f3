import os

import numpy as np
import pytest

from ickalman import codec
from ickalman.errors import ConfigurationError, ProgramError, TapeRuntimeError
from ickalman.filters import dual_kf_run, kf_run
from ickalman.ssm import SystemParams
from ickalman.tape import (
    Instruction,
    Operand,
    build_tape,
    compile_dual_kf_program,
    compile_kf_program,
    exec_aff,
    exec_div,
    exec_map,
    exec_mul,
    exec_transpose,
    parse_assembly,
    run_program,
    run_steps,
    to_assembly,
    validate_program,
)

from conftest import random_system

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def scratch_tape(n=3, N=2, mode="kf"):
    params, traj = random_system(n=n, N=N, seed=3)
    scheme = "scalar" if mode == "kf" else "scalar-no-params"
    return build_tape(codec.encode(params, traj, scheme), mode), params, traj


class TestOps:
    def test_mul_identity(self):
        tape, params, _ = scratch_tape()
        exec_mul(tape, "B1", "F", "B2")        # B1 starts as I
        np.testing.assert_array_equal(tape.read("B2"), params.F)

    def test_mul_zero(self):
        tape, _, _ = scratch_tape()
        exec_mul(tape, "B2", "F", "B9")        # B2 starts as zeros
        np.testing.assert_array_equal(tape.read("B9"), np.zeros((3, 3)))

    def test_mul_oracle(self, rng):
        tape, _, _ = scratch_tape()
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        tape.write("B2", a)
        tape.write("B9", b)
        exec_mul(tape, "B2", "B9", "B1")
        np.testing.assert_allclose(tape.read("B1"), a @ b, atol=1e-14)

    def test_mul_scalar_broadcast(self):
        tape, _, _ = scratch_tape()
        tape.write("B7", [[2.5]])
        tape.write("B4", [[1.0], [2.0], [3.0]])
        exec_mul(tape, "B7", "B4", "B8")
        np.testing.assert_array_equal(tape.read("B8"), [[2.5], [5.0], [7.5]])

    def test_div_by_one(self):
        tape, params, _ = scratch_tape()
        tape.write("B6", [[1.0]])
        exec_div(tape, "F", "B6", "B2")
        np.testing.assert_array_equal(tape.read("B2"), params.F)

    def test_div_hand_value(self):
        tape, _, _ = scratch_tape(n=2)
        tape.write("B2", [[2.0, 4.0], [6.0, 8.0]])
        tape.write("B6", [[2.0]])
        exec_div(tape, "B2", "B6", "B9")
        np.testing.assert_array_equal(tape.read("B9"), [[1.0, 2.0], [3.0, 4.0]])

    def test_div_near_zero_raises(self):
        tape, _, _ = scratch_tape()
        tape.write("B6", [[1e-15]])
        with pytest.raises(TapeRuntimeError, match="instruction"):
            exec_div(tape, "B5", "B6", "B7")

    def test_aff_copy_and_diff(self, rng):
        tape, _, _ = scratch_tape()
        a = rng.standard_normal((3, 3))
        tape.write("B2", a)
        exec_aff(tape, "B2", "B9", "B1", 1.0, 0.0)
        np.testing.assert_array_equal(tape.read("B1"), a)
        tape.write("B5", [[3.0]])
        tape.write("B6", [[1.0]])
        exec_aff(tape, "B5", "B6", "B7", 1.0, -1.0)
        np.testing.assert_array_equal(tape.read("B7"), [[2.0]])

    def test_aff_matrix_weights(self, rng):
        tape, _, _ = scratch_tape()
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        w = rng.standard_normal((3, 3))
        tape.write("B2", a)
        tape.write("B9", b)
        exec_aff(tape, "B2", "B9", "B1", w, np.eye(3))
        np.testing.assert_allclose(tape.read("B1"), w @ a + b, atol=1e-14)

    def test_transpose(self, rng):
        tape, _, _ = scratch_tape()
        a = rng.standard_normal((3, 3))
        tape.write("B2", a)
        exec_transpose(tape, "B2", "B9")
        np.testing.assert_array_equal(tape.read("B9"), a.T)
        exec_transpose(tape, "B9", "B1")
        np.testing.assert_array_equal(tape.read("B1"), a)

    def test_map_regressor_layout(self):
        tape, _, _ = scratch_tape(n=2, mode="dual")
        tape.write("xhat.1", [[1.0], [2.0]])
        exec_map(tape, "xhat.1", "B10")
        np.testing.assert_array_equal(tape.read("B10"),
                                      [[1.0, 2.0, 0.0, 0.0],
                                       [0.0, 0.0, 1.0, 2.0]])

    def test_map_zero(self):
        tape, _, _ = scratch_tape(n=2, mode="dual")
        exec_map(tape, "x0", "B10")
        np.testing.assert_array_equal(tape.read("B10"), np.zeros((2, 4)))

    def test_map_unvec_round_trip(self, rng):
        tape, _, _ = scratch_tape(n=2, mode="dual")
        f = rng.standard_normal((2, 2))
        tape.write("fhat", f.reshape(-1, 1))
        exec_map(tape, "fhat", "F")
        np.testing.assert_array_equal(tape.read("F"), f)


class TestValidation:
    def test_shape_mismatch_reports_index(self):
        tape, _, _ = scratch_tape()
        prog = compile_kf_program(3, 2)
        bad = Instruction("MUL", Operand("B5"), (Operand("B1"), Operand("B2")))
        broken = prog.__class__(instructions=prog.instructions + (bad,),
                                n=3, N=2, mode="kf",
                                step_boundaries=prog.step_boundaries)
        with pytest.raises(ProgramError, match=str(len(prog.instructions))):
            validate_program(tape, broken)

    def test_unknown_register(self):
        tape, _, _ = scratch_tape()
        with pytest.raises(ProgramError, match="B99"):
            exec_mul(tape, "B99", "B1", "B2")

    def test_transposed_destination_rejected(self):
        tape, _, _ = scratch_tape()
        bad = Instruction("TRANSPOSE", Operand("B2", transpose=True),
                          (Operand("B1"),))
        with pytest.raises(ProgramError, match="transposed"):
            validate_program(tape, compile_kf_program(3, 1).__class__(
                instructions=(bad,), n=3, N=1, mode="kf"))

    def test_divisor_must_be_scalar(self):
        tape, _, _ = scratch_tape()
        with pytest.raises(ProgramError, match="1x1"):
            exec_div(tape, "B1", "B2", "B9")

    def test_compiled_programs_validate(self):
        for n in (1, 2, 4, 8):
            for N in (1, 5, 40):
                params, traj = random_system(n=n, N=N, seed=n + N)
                tape = build_tape(codec.encode(params, traj, "scalar"), "kf")
                validate_program(tape, compile_kf_program(n, N))
                tape_d = build_tape(
                    codec.encode(params, traj, "scalar-no-params"), "dual")
                validate_program(tape_d, compile_dual_kf_program(n, N))

    def test_locality(self, rng):
        # Any single instruction changes only its destination region.
        tape, _, _ = scratch_tape(n=2, mode="dual")
        prog = compile_dual_kf_program(2, 2)
        for i, instr in enumerate(prog.instructions[:40]):
            before = tape.a_cat.copy()
            run_program(tape.__class__(a_cat=tape.a_cat, layout=tape.layout,
                                       append_cols=tape.append_cols, n=tape.n,
                                       N=tape.N, mode=tape.mode),
                        prog.__class__(instructions=(instr,), n=2, N=2,
                                       mode="dual"))
            reg = tape.layout[instr.dst.name]
            mask = np.ones_like(before, dtype=bool)
            shape = instr.dst.shape or reg.shape
            mask[reg.rows[0]:reg.rows[0] + shape[0],
                 reg.cols[0]:reg.cols[0] + shape[1]] = False
            assert np.array_equal(tape.a_cat[mask], before[mask])


class TestBuildTape:
    def test_b1_starts_identity(self):
        tape, _, _ = scratch_tape(n=4)
        np.testing.assert_array_equal(tape.read("B1"), np.eye(4))

    def test_dual_tape_has_no_F_in_input(self):
        params, traj = random_system(n=3, N=4, seed=5)
        ctx = codec.encode(params, traj, "scalar-no-params")
        assert ctx.data.shape == (4, 3 + 2 * 4 + 1)
        tape = build_tape(ctx, "dual")
        np.testing.assert_array_equal(tape.read("F"), np.eye(3))
        np.testing.assert_array_equal(tape.read("fhat").reshape(3, 3), np.eye(3))
        np.testing.assert_array_equal(tape.read("B12"), np.eye(9))

    def test_scalar_column_count(self):
        params, traj = random_system(n=5, N=7, seed=6)
        ctx = codec.encode(params, traj, "scalar")
        assert ctx.data.shape == (6, 2 * 5 + 2 * 7 + 1)

    def test_mode_scheme_mismatch(self):
        params, traj = random_system(n=2, N=3, seed=7)
        ctx = codec.encode(params, traj, "scalar")
        with pytest.raises(ConfigurationError, match="scalar-no-params"):
            build_tape(ctx, "dual")

    def test_input_block_matches_context(self):
        params, traj = random_system(n=3, N=4, seed=8)
        ctx = codec.encode(params, traj, "scalar")
        tape = build_tape(ctx, "kf")
        np.testing.assert_array_equal(tape.a_input[:4], ctx.data)

    def test_regions_disjoint(self):
        tape, _, _ = scratch_tape(n=3, N=3, mode="dual")
        cover = np.zeros_like(tape.a_cat, dtype=int)
        for name, reg in tape.layout.items():
            if name == "x0":     # by construction aliases the sigma column
                continue
            cover[reg.rows[0]:reg.rows[1], reg.cols[0]:reg.cols[1]] += 1
        assert cover.max() <= 1


class TestPrograms:
    def test_scalar_hand_computation(self):
        # n=1, N=1, worked by hand: f=0.5 q=0.1 h=2 sigma2=0.2 y=1 from
        # x0_hat=0, P0=1 gives prior var 0.35, denominator 1.6, gain
        # 0.4375, posterior mean 0.4375, posterior var 0.04375.
        params = SystemParams(n=1, m=1, F=[[0.5]], Q=[[0.1]], R=[[0.2]],
                              H_seq=[[[2.0]]])
        ctx = codec.encode(params, np.array([[1.0]]), "scalar")
        tape = build_tape(ctx, "kf")
        snaps = run_steps(tape, compile_kf_program(1, 1))
        assert snaps[0].x_hat[0] == pytest.approx(0.4375, abs=1e-15)
        assert snaps[0].P[0, 0] == pytest.approx(0.04375, abs=1e-15)
        assert snaps[0].y_pred == pytest.approx(0.0, abs=1e-15)

    def test_kf_program_matches_filter(self):
        for n in (1, 2, 4):
            for seed in range(5):
                params, traj = random_system(n=n, N=10, seed=seed)
                out = kf_run(params, traj.y_seq)
                tape = build_tape(codec.encode(params, traj, "scalar"), "kf")
                snaps = run_steps(tape, compile_kf_program(n, traj.N))
                for t, snap in enumerate(snaps):
                    np.testing.assert_allclose(snap.x_hat, out.x_filt[t + 1],
                                               rtol=0, atol=1e-9)
                    np.testing.assert_allclose(snap.P, out.P_filt[t + 1],
                                               rtol=0, atol=1e-9)
                    assert snap.y_pred == pytest.approx(out.y_pred[t, 0],
                                                        abs=1e-9)

    def test_final_covariance_matches(self):
        params, traj = random_system(n=4, N=12, seed=11)
        out = kf_run(params, traj.y_seq)
        tape = build_tape(codec.encode(params, traj, "scalar"), "kf")
        run_program(tape, compile_kf_program(4, 12))
        np.testing.assert_allclose(tape.read("B1"), out.P_filt[-1],
                                   rtol=0, atol=1e-9)

    def test_dual_program_matches_filter(self):
        for n in (1, 2, 3):
            for seed in range(4):
                params, traj = random_system(n=n, N=10, seed=seed)
                states, y_pred = dual_kf_run(params.Q, params.R[0, 0],
                                             params.H_seq, traj.y_seq)
                ctx = codec.encode(params, traj, "scalar-no-params")
                tape = build_tape(ctx, "dual")
                snaps = run_steps(tape, compile_dual_kf_program(n, traj.N))
                for t, snap in enumerate(snaps):
                    ref = states[t + 1]
                    np.testing.assert_allclose(snap.F_hat, ref.F_hat,
                                               rtol=0, atol=1e-8)
                    np.testing.assert_allclose(snap.x_hat, ref.state.x_hat,
                                               rtol=0, atol=1e-8)
                    np.testing.assert_allclose(snap.P_f, ref.P_f,
                                               rtol=0, atol=1e-8)
                    assert snap.y_pred == pytest.approx(y_pred[t], abs=1e-8)

    def test_ablated_dual_equals_kf_program(self):
        params, traj = random_system(n=3, N=8, seed=12)
        kf_tape = build_tape(codec.encode(params, traj, "scalar"), "kf")
        kf_snaps = run_steps(kf_tape, compile_kf_program(3, 8))
        dual_tape = build_tape(codec.encode(params, traj, "scalar-no-params"),
                               "dual")
        dual_tape.write("F", params.F)
        dual_snaps = run_steps(dual_tape,
                               compile_dual_kf_program(3, 8, with_f_update=False))
        for a, b in zip(kf_snaps, dual_snaps):
            np.testing.assert_allclose(a.x_hat, b.x_hat, rtol=0, atol=1e-12)
            np.testing.assert_allclose(a.P, b.P, rtol=0, atol=1e-12)

    def test_empty_program_leaves_tape_unchanged(self):
        tape, _, _ = scratch_tape()
        before = tape.a_cat.copy()
        run_program(tape, compile_kf_program(3, 2).__class__(
            instructions=(), n=3, N=2, mode="kf"))
        np.testing.assert_array_equal(tape.a_cat, before)


class TestAssembly:
    def test_round_trip(self):
        for prog in (compile_kf_program(2, 3), compile_dual_kf_program(2, 2)):
            text = to_assembly(prog)
            parsed = parse_assembly(text)
            assert parsed == prog.instructions

    def test_golden_assembly(self):
        for mode, prog in (("kf", compile_kf_program(2, 2)),
                           ("dual", compile_dual_kf_program(2, 2))):
            with open(os.path.join(GOLDEN, f"{mode}_n2_N2.kfasm")) as fh:
                assert fh.read() == to_assembly(prog)

    def test_parse_error_reports_line(self):
        with pytest.raises(ProgramError, match="line 2"):
            parse_assembly("MUL B1 B2 B3\nFROB B1 B2\n")

    def test_operand_syntax(self):
        parsed = parse_assembly("MUL B8[2x1] B7 B4\nMUL B7 h.1' xhat.1\n")
        assert parsed[0].dst == Operand("B8", shape=(2, 1))
        assert parsed[1].srcs[0] == Operand("h.1", transpose=True)
