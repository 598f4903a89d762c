"""Round protocol: clients train and upload packed ciphertexts, the server
adds them blind, every client decrypts the same broadcast.

One round has four phases. Selected clients run local training, quantize
each layer against the previous global model's min/max, pack the quantized
integers, and encrypt one ciphertext per packed polynomial with a fresh
one-time mask. The server collects exactly the expected number of updates,
checks they are mutually consistent, and adds ciphertexts position-wise; it
holds no key material and never sees a plaintext. Every client (selected or
not) then decrypts the broadcast sum, unpacks per-slot totals, divides by
the participant count, and dequantizes into the next global model. Because
all clients decrypt the same bytes with the same key and apply the same
integer average, they end the round with bit-identical models.

Per-phase wall-clock is recorded for the eight pipeline stages: train,
quantize, pack, encrypt on the upload path; aggregate on the server;
decrypt, unpack, dequantize on the download path.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bfv import Ciphertext, SecretKey, add_ciphertexts, decrypt, encrypt, prepare_mask
from .errors import ProtocolError, RoundAbort
from .packing import (
    FieldLayout,
    PackedLayer,
    QuantParams,
    average_unpacked,
    dequantize_layer,
    pack_layer,
    quantize_layer,
    unpack_layer,
    validate_layout,
)
from .ring import RingContext
from .sampling import derive_seed
from .wire import Abort, AggregateBroadcast, EncryptedUpdate, decode_message, encode_message

UPLOAD_STAGES = ("train", "quantize", "pack", "encrypt")
DOWNLOAD_STAGES = ("decrypt", "unpack", "dequantize")
ALL_STAGES = UPLOAD_STAGES + ("aggregate",) + DOWNLOAD_STAGES


@dataclass(frozen=True)
class LayerSpec:
    name: str
    weight_count: int
    layout: FieldLayout

    @property
    def poly_count(self) -> int:
        return self.layout.polys_for(self.weight_count)


@dataclass(frozen=True)
class ModelSchema:
    layers: tuple[LayerSpec, ...]

    @property
    def total_polys(self) -> int:
        return sum(spec.poly_count for spec in self.layers)

    def poly_slices(self) -> list[slice]:
        slices, start = [], 0
        for spec in self.layers:
            slices.append(slice(start, start + spec.poly_count))
            start += spec.poly_count
        return slices

    def check_model(self, model: list[np.ndarray]):
        if len(model) != len(self.layers):
            raise ProtocolError(f"model has {len(model)} layers, schema has {len(self.layers)}")
        for spec, layer in zip(self.layers, model):
            if layer.size != spec.weight_count:
                raise ProtocolError(
                    f"layer {spec.name}: {layer.size} weights, schema says {spec.weight_count}"
                )


def build_schema(layer_sizes, layout: FieldLayout) -> ModelSchema:
    check = validate_layout(layout)
    if not check.ok:
        raise ProtocolError(
            "unsound field layout: " + "; ".join(str(v) for v in check.violations)
        )
    layers = tuple(
        LayerSpec(name=f"layer{i}", weight_count=int(r), layout=layout)
        for i, r in enumerate(layer_sizes)
    )
    return ModelSchema(layers=layers)


def quant_params_for(model: list[np.ndarray], schema: ModelSchema) -> list[QuantParams]:
    """Per-layer affine ranges from the current global model."""
    params = []
    for spec, layer in zip(schema.layers, model):
        params.append(
            QuantParams(lo=float(layer.min()), hi=float(layer.max()), beta=spec.layout.beta)
        )
    return params


class _StageClock:
    def __init__(self):
        self.micros: dict[str, float] = {}

    def run(self, stage: str, fn):
        t0 = time.perf_counter_ns()
        out = fn()
        self.micros[stage] = (time.perf_counter_ns() - t0) / 1000.0
        return out


class Client:
    """Holds the shared secret key, its data shard, and the current model."""

    def __init__(
        self,
        client_id: int,
        ctx: RingContext,
        schema: ModelSchema,
        secret_key: SecretKey,
        root_seed: bytes,
        trainer,
    ):
        self.client_id = client_id
        self.ctx = ctx
        self.schema = schema
        self.sk = secret_key
        self.root_seed = root_seed
        self.trainer = trainer
        self.model: list[np.ndarray] | None = None

    def set_model(self, model: list[np.ndarray]):
        self.schema.check_model(model)
        self.model = [np.array(layer, dtype=np.float64) for layer in model]

    def local_round(self, round_no: int) -> tuple[EncryptedUpdate, dict[str, float]]:
        """Phases 1-2: train, quantize, pack, encrypt."""
        if self.model is None:
            raise ProtocolError("client has no model; broadcast the initial model first")
        clock = _StageClock()
        local = clock.run("train", lambda: self.trainer(self.model))
        self.schema.check_model(local)
        qparams = quant_params_for(self.model, self.schema)

        ints = clock.run(
            "quantize",
            lambda: [quantize_layer(w, p) for w, p in zip(local, qparams)],
        )
        packed = clock.run(
            "pack",
            lambda: [
                pack_layer(v, spec.layout) for v, spec in zip(ints, self.schema.layers)
            ],
        )

        def do_encrypt():
            cts = []
            idx = 0
            for layer in packed:
                for pt in layer.polys:
                    seed = derive_seed(self.root_seed, "mask", round_no, self.client_id, idx)
                    mask = prepare_mask(self.sk, seed, self.ctx)
                    cts.append(encrypt(pt, mask, self.ctx, round_tag=round_no, index=idx))
                    idx += 1
            return cts

        cts = clock.run("encrypt", do_encrypt)
        meta = [(p.lo, p.hi) for p in qparams]
        return EncryptedUpdate(self.client_id, round_no, cts, meta), clock.micros

    def apply_broadcast(
        self, bc: AggregateBroadcast, round_no: int
    ) -> tuple[list[np.ndarray], dict[str, float]]:
        """Phase 4: decrypt the aggregate, average, dequantize, adopt the model."""
        if self.model is None:
            raise ProtocolError("client has no model; broadcast the initial model first")
        if bc.round_no != round_no:
            raise ProtocolError(f"broadcast is for round {bc.round_no}, expected {round_no}")
        if len(bc.cts) != self.schema.total_polys:
            raise ProtocolError(
                f"broadcast has {len(bc.cts)} ciphertexts, schema needs {self.schema.total_polys}"
            )
        qparams = quant_params_for(self.model, self.schema)
        echoed = [(p.lo, p.hi) for p in qparams]
        got = [(lo, hi) for lo, hi in bc.quant_meta]
        if got != echoed:
            raise ProtocolError("quantization ranges in broadcast do not match local model")

        clock = _StageClock()
        plains = clock.run(
            "decrypt", lambda: [decrypt(ct, self.sk, self.ctx) for ct in bc.cts]
        )

        def do_unpack():
            sums = []
            for spec, sl in zip(self.schema.layers, self.schema.poly_slices()):
                layer = PackedLayer(
                    polys=plains[sl], layout=spec.layout, weight_count=spec.weight_count
                )
                sums.append(average_unpacked(unpack_layer(layer), bc.participants))
            return sums

        averaged = clock.run("unpack", do_unpack)
        new_model = clock.run(
            "dequantize",
            lambda: [
                dequantize_layer(v, p).reshape(old.shape)
                for v, p, old in zip(averaged, qparams, self.model)
            ],
        )
        self.model = new_model
        return new_model, clock.micros


class Server:
    """Aggregator: validates updates and adds ciphertexts. No key material."""

    def __init__(self, ctx: RingContext, schema: ModelSchema):
        self.ctx = ctx
        self.schema = schema

    def aggregate(
        self, updates: list[EncryptedUpdate], expected: int, round_no: int
    ) -> AggregateBroadcast:
        if len(updates) < expected:
            raise RoundAbort(f"round {round_no}: {len(updates)} of {expected} updates arrived")
        seen = set()
        for upd in updates:
            if upd.round_no != round_no:
                raise ProtocolError(
                    f"update from client {upd.client_id} is for round {upd.round_no}"
                )
            if upd.client_id in seen:
                raise ProtocolError(f"duplicate update from client {upd.client_id}")
            seen.add(upd.client_id)
            if len(upd.cts) != self.schema.total_polys:
                raise ProtocolError(
                    f"client {upd.client_id} sent {len(upd.cts)} ciphertexts, "
                    f"expected {self.schema.total_polys}"
                )
            if upd.quant_meta != updates[0].quant_meta:
                raise ProtocolError(
                    f"client {upd.client_id} disagrees on quantization ranges"
                )
        ordered = sorted(updates, key=lambda u: u.client_id)
        cts = [
            add_ciphertexts([u.cts[i] for u in ordered])
            for i in range(self.schema.total_polys)
        ]
        return AggregateBroadcast(
            round_no=round_no,
            participants=len(ordered),
            cts=cts,
            quant_meta=list(updates[0].quant_meta),
        )


def select_clients(total: int, sample: int, seed) -> list[int]:
    """Deterministic sample of client ids for one round."""
    if not 1 <= sample <= total:
        raise ProtocolError(f"cannot sample {sample} of {total} clients")
    return sorted(random.Random(seed).sample(range(total), sample))


@dataclass
class RoundResult:
    round_no: int
    participants: list[int]
    model: list[np.ndarray]
    stage_micros: dict[str, float] = field(default_factory=dict)


def run_round(
    server: Server,
    clients: list[Client],
    transport,
    round_no: int,
    participants: list[int],
    timeout: float | None = None,
) -> RoundResult:
    """Drive one full round over a transport.

    Client work runs in threads; server receives are interleaved with client
    sends so socket buffers always drain. If any expected update fails to
    arrive, the server broadcasts an abort to every client and the round
    raises RoundAbort. Stage times are averaged over the clients that ran
    each stage.
    """
    transport.begin_round(round_no)
    by_id = {c.client_id: c for c in clients}
    selected = [by_id[cid] for cid in participants]
    ctx = server.ctx

    upload_times: list[dict[str, float]] = []

    def client_upload(client: Client):
        upd, times = client.local_round(round_no)
        transport.send_to_server(client.client_id, encode_message(upd))
        return times

    with ThreadPoolExecutor(max_workers=max(len(clients), 1)) as pool:
        futures = [pool.submit(client_upload, c) for c in selected]
        updates = []
        try:
            for _ in selected:
                updates.append(decode_message(transport.recv_at_server(timeout), ctx))
        except TimeoutError:
            abort = encode_message(Abort(round_no, "missing client updates"))
            for c in clients:
                transport.send_to_client(c.client_id, abort)
            raise RoundAbort(f"round {round_no}: timed out waiting for updates") from None
        for fut in futures:
            upload_times.append(fut.result())

        clock = _StageClock()
        bc = clock.run("aggregate", lambda: server.aggregate(updates, len(selected), round_no))
        data = encode_message(bc)

        def client_download(client: Client):
            msg = decode_message(transport.recv_at_client(client.client_id, timeout), ctx)
            if isinstance(msg, Abort):
                raise RoundAbort(f"round {round_no}: server aborted: {msg.reason}")
            return client.apply_broadcast(msg, round_no)

        down_futures = [pool.submit(client_download, c) for c in clients]
        for c in clients:
            transport.send_to_client(c.client_id, data)
        download_times = []
        for fut in down_futures:
            _, times = fut.result()
            download_times.append(times)

    stage_micros = dict(clock.micros)
    for stage in UPLOAD_STAGES:
        stage_micros[stage] = sum(t[stage] for t in upload_times) / len(upload_times)
    for stage in DOWNLOAD_STAGES:
        stage_micros[stage] = sum(t[stage] for t in download_times) / len(download_times)

    model = clients[0].model
    for c in clients[1:]:
        for a, b in zip(model, c.model):
            if not np.array_equal(a, b):
                raise ProtocolError(f"client {c.client_id} ended round with a different model")
    return RoundResult(
        round_no=round_no,
        participants=list(participants),
        model=[layer.copy() for layer in model],
        stage_micros=stage_micros,
    )
