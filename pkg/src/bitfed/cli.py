"""Command-line front end.

Subcommands:
    run              execute a federated experiment and write metrics
    capacity         print the packing capacity table for a list of beta values
    predict-traffic  analytic per-round traffic for a configuration
    selftest         fast invariant suite over the whole pipeline

`run` reads an optional JSON config file; any flag given on the command line
overrides the file value.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import BitfedError, ConfigError
from .harness import (
    ExperimentConfig,
    capacity_table,
    format_capacity_table,
    predict_traffic,
    run_experiment,
)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--rounds", type=int, metavar="N")
    p.add_argument("--beta", type=int, metavar="N", help="weight bits per slot")
    p.add_argument("--delta", type=int, metavar="N", help="guard bits per slot")
    p.add_argument("--clients", type=int, metavar="N", help="total clients U")
    p.add_argument("--sample", type=int, metavar="N", help="clients selected per round M")
    p.add_argument("--transport", choices=("mem", "socket"))
    p.add_argument("--out", metavar="DIR", help="write metrics.csv / summary.json here")
    p.add_argument(
        "--plaintext-control",
        action="store_true",
        default=None,
        help="run the crypto-bypassed reference pipeline",
    )
    p.add_argument("--trainer", choices=("logistic", "identity"))
    p.add_argument("--features", type=int, metavar="N")
    p.add_argument("--weights", type=int, metavar="R", help="single layer of R weights")


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {
        "seed": args.seed,
        "rounds": args.rounds,
        "beta": args.beta,
        "delta": args.delta,
        "clients": args.clients,
        "sample": args.sample,
        "transport": args.transport,
        "out": args.out,
        "plaintext_control": args.plaintext_control,
        "trainer": args.trainer,
        "features": args.features,
    }
    if args.weights is not None:
        overrides["layer_sizes"] = (args.weights,)
        if args.trainer is None:
            overrides["trainer"] = "identity"
    return cfg.with_overrides(overrides)


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    result = run_experiment(config)
    s = result.summary
    print(f"rounds: {s['rounds_run']}  backend: {s['backend']}")
    print(f"final loss: {s['final_loss']:.6f}  final accuracy: {s['final_accuracy']:.4f}")
    tr = s["traffic"]
    print(
        f"traffic/round/client: up {tr['predicted_upload_per_round']} B, "
        f"down {tr['predicted_download_per_round']} B "
        f"(measured match: {tr['exact_match']})"
    )
    if config.out:
        print(f"wrote {config.out}/metrics.csv and summary.json")
    return 0


def _cmd_capacity(args) -> int:
    betas = [int(b) for b in args.betas.split(",")]
    config = ExperimentConfig().with_overrides(
        {"sample": args.sample, "delta": args.delta, "t": args.t}
    )
    ctx = config.build_context()
    rows = capacity_table(args.t, args.sample, betas, args.delta, args.weights, ctx)
    print(format_capacity_table(rows, args.t, args.sample, args.delta, args.weights))
    return 0


def _cmd_predict_traffic(args) -> int:
    config = _config_from_args(args)
    ctx = config.build_context()
    schema = config.build_schema(ctx)
    up, down = predict_traffic(schema, ctx)
    print(f"polynomials per update: {schema.total_polys}")
    print(f"upload bytes/round/client:   {up}")
    print(f"download bytes/round/client: {down}")
    print(f"total bytes/round/client:    {up + down}")
    return 0


def _cmd_selftest(_args) -> int:
    return 0 if run_selftest() else 1


def run_selftest(print_fn=print) -> bool:
    """Fast end-to-end invariant checks; returns True when all pass."""
    from . import bfv, packing, ring, sampling, wire
    from .harness import model_digest

    def check(name, fn):
        fn()
        print_fn(f"ok: {name}")

    try:
        def ntt_case():
            ctx = ring.RingContext.create(8, [65537], 17)
            rng = np.random.default_rng(7)
            a = [int(v) for v in rng.integers(0, 65537, 8)]
            b = [int(v) for v in rng.integers(0, 65537, 8)]
            pa, pb = ring.poly_from_coeffs(ctx, a), ring.poly_from_coeffs(ctx, b)
            got = ring.crt_reconstruct(
                ring.ntt_inverse(ring.poly_mul(ring.ntt_forward(pa), ring.ntt_forward(pb)))
            )
            want = [0] * 8
            for i in range(8):
                for j in range(8):
                    k = i + j
                    sign = 1 if k < 8 else -1
                    want[k % 8] = (want[k % 8] + sign * a[i] * b[j]) % 65537
            assert got == want, "negacyclic product mismatch"

        check("ntt matches schoolbook negacyclic product", ntt_case)

        def golden_case():
            layout = packing.FieldLayout(
                beta=8, slots=2, delta=2, max_clients=3, ring_degree=4096,
                plaintext_modulus=2281701377,
            )
            packed = packing.pack_layer(np.array([0, 9], dtype=np.uint64), layout)
            assert int(packed.polys[0].coeffs[0]) == 9216
            agg = packing.PackedLayer(
                [bfv.PlaintextPoly.create(
                    np.array([368919] + [0] * 4095, dtype=np.uint64),
                    ring.default_context(),
                )],
                layout, 2,
            )
            sums = packing.unpack_layer(agg)
            assert list(sums) == [279, 360]
            assert list(packing.average_unpacked(sums, 3)) == [93, 120]

        check("bit-interleaved packing golden values", golden_case)

        def bfv_case():
            ctx = ring.default_context()
            sk = bfv.keygen(sampling.seed_from_int(11), ctx)
            rng = np.random.default_rng(11)
            msgs, cts = [], []
            for i in range(3):
                m = bfv.PlaintextPoly.create(rng.integers(0, ctx.t, ctx.n, dtype=np.uint64), ctx)
                mask = bfv.prepare_mask(sk, sampling.seed_from_int(100 + i), ctx)
                cts.append(bfv.encrypt(m, mask, ctx))
                msgs.append(m)
            one = bfv.decrypt(cts[0], sk, ctx)
            assert np.array_equal(one.coeffs, msgs[0].coeffs), "roundtrip mismatch"
            agg = bfv.decrypt(bfv.add_ciphertexts(cts), sk, ctx)
            want = (
                msgs[0].coeffs.astype(object) + msgs[1].coeffs + msgs[2].coeffs
            ) % ctx.t
            assert np.array_equal(agg.coeffs.astype(object), want), "sum mismatch"

        check("bfv roundtrip and 3-way homomorphic sum", bfv_case)

        def reuse_case():
            ctx = ring.default_context()
            sk = bfv.keygen(sampling.seed_from_int(5), ctx)
            mask = bfv.prepare_mask(sk, sampling.seed_from_int(6), ctx)
            m = bfv.PlaintextPoly.zeros(ctx)
            bfv.encrypt(m, mask, ctx)
            try:
                bfv.encrypt(m, mask, ctx)
            except BitfedError:
                return
            raise AssertionError("mask reuse was not rejected")

        check("one-time mask reuse rejected", reuse_case)

        def wire_case():
            ctx = ring.default_context()
            msg = wire.ModelInit(0, [np.arange(5, dtype=np.float64)])
            data = wire.encode_message(msg)
            back = wire.decode_message(data, ctx)
            assert np.array_equal(back.layers[0], msg.layers[0])
            try:
                wire.decode_message(data[:-1], ctx)
            except BitfedError:
                return
            raise AssertionError("truncated frame was not rejected")

        check("wire roundtrip and truncation detection", wire_case)

        def e2e_case():
            base = ExperimentConfig(rounds=3, clients=4, sample=2, features=4, seed=3,
                                    shard_size=64, eval_size=200)
            enc = run_experiment(base)
            ctl = run_experiment(ExperimentConfig(**{**_cfg_dict(base), "plaintext_control": True}))
            assert enc.round_digests == ctl.round_digests, "control and encrypted models differ"
            assert model_digest(enc.final_model) == model_digest(ctl.final_model)

        check("3-round encrypted run equals plaintext control", e2e_case)
    except Exception as exc:
        print_fn(f"FAILED: {exc}")
        return False
    print_fn("selftest passed")
    return True


def _cfg_dict(config: ExperimentConfig) -> dict:
    return {f: getattr(config, f) for f in config.__dataclass_fields__}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitfed",
        description="Encrypted federated aggregation with bit-interleaved packing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a federated experiment")
    _add_config_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_cap = sub.add_parser("capacity", help="packing capacity table")
    p_cap.add_argument("--betas", default="6,8,12", help="comma-separated beta values")
    p_cap.add_argument("--delta", type=int, default=3)
    p_cap.add_argument("--sample", type=int, default=5, help="summands per aggregate")
    p_cap.add_argument("--t", type=int, default=2281701377, help="plaintext modulus")
    p_cap.add_argument("--weights", type=int, default=61706, help="reference layer size")
    p_cap.set_defaults(fn=_cmd_capacity)

    p_pt = sub.add_parser("predict-traffic", help="analytic per-round traffic")
    _add_config_flags(p_pt)
    p_pt.set_defaults(fn=_cmd_predict_traffic)

    p_st = sub.add_parser("selftest", help="run the invariant suite")
    p_st.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BitfedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
