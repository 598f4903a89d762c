"""Experiment harness: configuration, traffic prediction, metrics emission.

run_experiment drives T rounds of the protocol and writes one row per round
to metrics.csv (fixed column order: round, the eight stage durations in
microseconds, upload_bytes, download_bytes, loss, accuracy) plus a
summary.json with totals and mean stage percentages. With
plaintext_control=True the same schedule runs through a crypto-bypassed
pipeline (quantize, integer-sum, round-average, dequantize); because packed
aggregation is exact, the control and encrypted runs must produce
bit-identical models round by round, which is the central check the harness
exists to make cheap.

Byte columns report one client's view of a round: upload is what a selected
client sent, download is what any client received. predict_traffic computes
the same figures analytically from the wire-format size formulas.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .bfv import keygen
from .errors import ConfigError, InfeasibleLayoutError
from .packing import (
    average_unpacked,
    dequantize_layer,
    make_layout,
    max_packed_value,
    quantize_layer,
    validate_layout,
)
from .protocol import (
    ALL_STAGES,
    Client,
    ModelSchema,
    Server,
    build_schema,
    quant_params_for,
    run_round,
    select_clients,
)
from .ring import RingContext, default_context, find_ntt_prime, is_prime
from .sampling import derive_seed, seed_from_int
from .trainer import client_shard, evaluate, make_blobs, make_trainer
from .transport import MemTransport, SocketTransport
from .wire import (
    ModelInit,
    broadcast_wire_size,
    decode_message,
    encode_message,
    update_wire_size,
)

CSV_COLUMNS = (
    "round",
    "train_us",
    "quantize_us",
    "pack_us",
    "encrypt_us",
    "aggregate_us",
    "decrypt_us",
    "unpack_us",
    "dequantize_us",
    "upload_bytes",
    "download_bytes",
    "loss",
    "accuracy",
)

TIMING_COLUMNS = tuple(c for c in CSV_COLUMNS if c.endswith("_us"))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 4096
    limbs: int = 2
    limb_bits: int = 54
    t: int = 2281701377
    beta: int = 8
    delta: int = 3
    clients: int = 10
    sample: int = 5
    rounds: int = 100
    seed: int = 1
    layer_sizes: tuple[int, ...] | None = None
    trainer: str = "logistic"
    features: int = 16
    shard_size: int = 256
    iid: bool = True
    lr: float = 0.5
    epochs: int = 3
    eval_size: int = 2000
    transport: str = "mem"
    out: str | None = None
    plaintext_control: bool = False

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return ExperimentConfig().with_overrides(raw)

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        known = set(self.__dataclass_fields__)
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        clean = {
            k: (tuple(v) if k == "layer_sizes" and v is not None else v)
            for k, v in overrides.items()
            if v is not None
        }
        return replace(self, **clean)

    def model_layer_sizes(self) -> tuple[int, ...]:
        if self.trainer == "logistic":
            want = (self.features + 1,)
            if self.layer_sizes not in (None, want):
                raise ConfigError(
                    f"logistic trainer needs layer_sizes {list(want)} "
                    f"(features + bias), got {list(self.layer_sizes)}"
                )
            return want
        if self.layer_sizes is None:
            return (self.features + 1,)
        return self.layer_sizes

    def build_context(self) -> RingContext:
        default = ExperimentConfig()
        if (self.n, self.limbs, self.limb_bits, self.t) == (
            default.n,
            default.limbs,
            default.limb_bits,
            default.t,
        ):
            return default_context()
        primes, above = [], 2**self.limb_bits
        for _ in range(self.limbs):
            p = find_ntt_prime(self.limb_bits, self.n, above)
            primes.append(p)
            above = p + 1
        return RingContext.create(self.n, primes, self.t)

    def build_schema(self, ctx: RingContext) -> ModelSchema:
        layout = make_layout(self.beta, self.delta, self.sample, ctx)
        return build_schema(self.model_layer_sizes(), layout)

    def validate(self):
        if self.transport not in ("mem", "socket"):
            raise ConfigError(f"transport must be 'mem' or 'socket', got {self.transport!r}")
        if not 1 <= self.sample <= self.clients:
            raise ConfigError(f"need 1 <= sample <= clients, got {self.sample}/{self.clients}")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if not is_prime(self.t):
            raise ConfigError(f"plaintext modulus {self.t} is not prime")
        ctx = self.build_context()
        try:
            schema = self.build_schema(ctx)
        except InfeasibleLayoutError as exc:
            raise ConfigError(f"infeasible packing layout: {exc}") from exc
        for spec in schema.layers:
            check = validate_layout(spec.layout)
            if not check.ok:
                raise ConfigError(
                    f"layer {spec.name} layout unsound: "
                    + "; ".join(str(v) for v in check.violations)
                )
        return ctx, schema


@dataclass
class MetricsRecord:
    round_no: int
    stage_micros: dict[str, float]
    upload_bytes: int
    download_bytes: int
    loss: float
    accuracy: float

    def row(self) -> list:
        return (
            [self.round_no]
            + [self.stage_micros[s] for s in ALL_STAGES]
            + [self.upload_bytes, self.download_bytes, self.loss, self.accuracy]
        )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[MetricsRecord]
    summary: dict
    final_model: list[np.ndarray]
    round_digests: list[str]

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for rec in self.records:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in rec.row()))
        return "\n".join(lines) + "\n"


def predict_traffic(schema: ModelSchema, ctx: RingContext) -> tuple[int, int]:
    """Per-round bytes for one client: (upload as participant, download)."""
    t_total = schema.total_polys
    layers = len(schema.layers)
    return (
        update_wire_size(t_total, layers, ctx),
        broadcast_wire_size(t_total, layers, ctx),
    )


def model_digest(model: list[np.ndarray]) -> str:
    h = hashlib.sha256()
    for layer in model:
        h.update(np.ascontiguousarray(layer, dtype="<f8").tobytes())
    return h.hexdigest()


def _init_model(root_seed: bytes, layer_sizes) -> list[np.ndarray]:
    # spread the initial weights so the first quantization range is non-empty
    entropy = int.from_bytes(derive_seed(root_seed, "init"), "little")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
    return [rng.uniform(-0.3, 0.3, size=int(r)) for r in layer_sizes]


def _control_round(global_model, schema, trainers, participants, sample):
    """Crypto-bypassed reference: quantize, integer-sum, average, dequantize."""
    times = {s: 0.0 for s in ALL_STAGES}
    qparams = quant_params_for(global_model, schema)
    locals_, ints = [], []
    for cid in participants:
        t0 = time.perf_counter_ns()
        local = trainers[cid](global_model)
        times["train"] += (time.perf_counter_ns() - t0) / 1000.0
        t0 = time.perf_counter_ns()
        ints.append([quantize_layer(w, p) for w, p in zip(local, qparams)])
        times["quantize"] += (time.perf_counter_ns() - t0) / 1000.0
        locals_.append(local)
    times["train"] /= len(participants)
    times["quantize"] /= len(participants)

    t0 = time.perf_counter_ns()
    sums = [
        np.sum([client_ints[li] for client_ints in ints], axis=0, dtype=np.uint64)
        for li in range(len(schema.layers))
    ]
    times["aggregate"] = (time.perf_counter_ns() - t0) / 1000.0
    t0 = time.perf_counter_ns()
    averaged = [average_unpacked(s, sample) for s in sums]
    times["unpack"] = (time.perf_counter_ns() - t0) / 1000.0
    t0 = time.perf_counter_ns()
    new_model = [
        dequantize_layer(v, p).reshape(old.shape)
        for v, p, old in zip(averaged, qparams, global_model)
    ]
    times["dequantize"] = (time.perf_counter_ns() - t0) / 1000.0
    return new_model, times


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    ctx, schema = config.validate()
    layer_sizes = config.model_layer_sizes()
    root = seed_from_int(config.seed)

    eval_set = None
    trainers = {}
    for cid in range(config.clients):
        if config.trainer == "identity":
            trainers[cid] = make_trainer("identity", None, None, 0.0, 0)
        else:
            x, y = client_shard(root, cid, config.shard_size, config.features, iid=config.iid)
            trainers[cid] = make_trainer(config.trainer, x, y, config.lr, config.epochs)
    if config.trainer == "logistic":
        eval_set = make_blobs(derive_seed(root, "eval"), config.eval_size, config.features)

    init_model = _init_model(root, layer_sizes)
    records: list[MetricsRecord] = []
    digests: list[str] = []

    def measure(model):
        if eval_set is None:
            return float("nan"), float("nan")
        return evaluate(model, *eval_set)

    if config.plaintext_control:
        model = [layer.copy() for layer in init_model]
        for round_no in range(1, config.rounds + 1):
            participants = select_clients(
                config.clients, config.sample, derive_seed(root, "select", round_no)
            )
            model, times = _control_round(model, schema, trainers, participants, config.sample)
            loss, acc = measure(model)
            records.append(MetricsRecord(round_no, times, 0, 0, loss, acc))
            digests.append(model_digest(model))
        final_model = model
    else:
        sk = keygen(derive_seed(root, "key"), ctx)
        client_ids = list(range(config.clients))
        clients = [
            Client(cid, ctx, schema, sk, derive_seed(root, "client", cid), trainers[cid])
            for cid in client_ids
        ]
        server = Server(ctx, schema)
        transport = (
            SocketTransport(client_ids) if config.transport == "socket" else MemTransport(client_ids)
        )
        try:
            transport.begin_round(0)
            init_bytes = encode_message(ModelInit(0, init_model))
            for c in clients:
                transport.send_to_client(c.client_id, init_bytes)
            for c in clients:
                msg = decode_message(transport.recv_at_client(c.client_id), ctx)
                c.set_model(msg.layers)

            for round_no in range(1, config.rounds + 1):
                participants = select_clients(
                    config.clients, config.sample, derive_seed(root, "select", round_no)
                )
                result = run_round(server, clients, transport, round_no, participants)
                loss, acc = measure(result.model)
                records.append(
                    MetricsRecord(
                        round_no,
                        result.stage_micros,
                        transport.ledger.upload_bytes(round_no, participants[0]),
                        transport.ledger.download_bytes(round_no, clients[0].client_id),
                        loss,
                        acc,
                    )
                )
                digests.append(model_digest(result.model))
            final_model = clients[0].model if config.rounds else init_model
        finally:
            transport.close()

    pred_up, pred_down = predict_traffic(schema, ctx)
    csv_up = sum(r.upload_bytes for r in records)
    csv_down = sum(r.download_bytes for r in records)
    loss, acc = measure(final_model)
    stage_percent = _mean_stage_percent(records)
    summary = {
        "config": _config_dict(config),
        "backend": kernels.BACKEND,
        "rounds_run": len(records),
        "final_loss": loss,
        "final_accuracy": acc,
        "final_model_digest": model_digest(final_model),
        "stage_percent_mean": stage_percent,
        "stage_micros_mean": {
            s: (sum(r.stage_micros[s] for r in records) / len(records) if records else 0.0)
            for s in ALL_STAGES
        },
        "traffic": {
            "predicted_upload_per_round": pred_up,
            "predicted_download_per_round": pred_down,
            "csv_upload_total": csv_up,
            "csv_download_total": csv_down,
            "predicted_upload_total": pred_up * len(records),
            "predicted_download_total": pred_down * len(records),
            "exact_match": (
                not config.plaintext_control
                and csv_up == pred_up * len(records)
                and csv_down == pred_down * len(records)
            ),
        },
    }
    result = ExperimentResult(config, records, summary, final_model, digests)
    if config.out:
        _write_outputs(result, Path(config.out))
    return result


def _mean_stage_percent(records) -> dict[str, float]:
    if not records:
        return {s: 0.0 for s in ALL_STAGES}
    acc = {s: 0.0 for s in ALL_STAGES}
    for rec in records:
        total = sum(rec.stage_micros[s] for s in ALL_STAGES)
        if total <= 0:
            continue
        for s in ALL_STAGES:
            acc[s] += 100.0 * rec.stage_micros[s] / total
    return {s: acc[s] / len(records) for s in ALL_STAGES}


def _config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    if d["layer_sizes"] is not None:
        d["layer_sizes"] = list(d["layer_sizes"])
    return d


def _write_outputs(result: ExperimentResult, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(result.csv_text())
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(result.summary, fh, indent=2, allow_nan=True)
        fh.write("\n")
    np.savez(
        out_dir / "final_model.npz",
        **{f"layer{i}": layer for i, layer in enumerate(result.final_model)},
    )


@dataclass(frozen=True)
class CapacityRow:
    beta: int
    feasible: bool
    slots: int
    width: int
    polys: int
    upload_bytes: int
    bytes_per_weight: float
    carry_slack: int
    modulus_slack: int
    note: str = ""


def capacity_table(
    t: int,
    max_clients: int,
    betas,
    delta: int,
    ref_weights: int = 61706,
    ctx: RingContext | None = None,
) -> list[CapacityRow]:
    """One row per beta: slot count, polynomial count and bytes for a
    reference layer, and the integer slack in each soundness bound."""
    ctx = ctx or default_context()
    rows = []
    for beta in betas:
        width = beta + delta
        carry_slack = 2**width - max_clients * (2**beta - 1)
        try:
            layout = make_layout(beta, delta, max_clients, ctx)
        except Exception as exc:
            rows.append(
                CapacityRow(beta, False, 0, width, 0, 0, math.nan, carry_slack, 0, str(exc))
            )
            continue

        polys = layout.polys_for(ref_weights)
        upload = update_wire_size(polys, 1, ctx)
        mod_slack = t - max_clients * max_packed_value(beta, delta, layout.slots)
        rows.append(
            CapacityRow(
                beta=beta,
                feasible=True,
                slots=layout.slots,
                width=width,
                polys=polys,
                upload_bytes=upload,
                bytes_per_weight=upload / ref_weights,
                carry_slack=carry_slack,
                modulus_slack=mod_slack,
            )
        )
    return rows


def format_capacity_table(rows, t: int, max_clients: int, delta: int, ref_weights: int) -> str:
    head = (
        f"packing capacity at t={t}, summands={max_clients}, guard bits={delta}, "
        f"reference layer={ref_weights} weights"
    )
    cols = f"{'beta':>4} {'m':>3} {'width':>5} {'polys':>5} {'upload_B':>10} {'B/weight':>9} {'carry_slack':>12} {'mod_slack':>22}"
    lines = [head, cols]
    for r in rows:
        if not r.feasible:
            lines.append(f"{r.beta:>4} {'-':>3} {r.width:>5} infeasible: {r.note}")
            continue
        lines.append(
            f"{r.beta:>4} {r.slots:>3} {r.width:>5} {r.polys:>5} {r.upload_bytes:>10} "
            f"{r.bytes_per_weight:>9.2f} {r.carry_slack:>12} {r.modulus_slack:>22}"
        )
    return "\n".join(lines)
