"""Session-oriented HTTP/JSON API for live interactive segmentation.

Each session owns one volume, one segmenter, and one growing slice set.
Clients pull a front-end bundle (slice image, proxy and prediction
overlays, guidance proposals), post run-length-encoded slice masks, and
the service synchronously folds each annotation into the proxy mask and
runs the round's training steps. Ground truth is never held server-side:
phantom sessions keep only the rendered volume.
"""

from __future__ import annotations

import base64
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from .guidance import propose_slices, random_slices, residual_map, slice_masses
from .interactive import InteractiveConfig, SessionState, _refresh_planes
from .losses import LossConfig, TrainSample, apply_sgd, confidence_weights, weighted_batch_loss
from .network import ConvNet3D, SegmenterSpec
from .phantom import PhantomConfig, phantom
from .rle import decode_mask, encode_mask
from .volume import BinaryMask, Volume, dice, labor_cost


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ApiSession:
    session_id: str
    state: SessionState
    net: ConvNet3D
    cfg: InteractiveConfig
    rng: np.random.Generator
    lock: threading.Lock = field(default_factory=threading.Lock)
    status: str = "awaiting-annotation"
    seen_keys: dict[str, dict] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)

    def pred(self) -> np.ndarray:
        return self.net.forward(self.state.volume.data)


@dataclass(frozen=True)
class ServiceConfig:
    max_sessions: int = 16
    channels: tuple[int, ...] = (4, 4)
    quota: int = 12
    inner_steps: int = 2
    eta: float = 0.3
    seed: int = 0


def _volume_from_payload(body: dict) -> Volume:
    if "phantom" in body:
        spec = body["phantom"]
        if not isinstance(spec, dict):
            raise ApiError(400, "bad_request", "phantom spec must be an object")
        try:
            cfg = PhantomConfig(**{
                k: tuple(v) if isinstance(v, list) else v for k, v in spec.items()
            })
            vol, _ = phantom(cfg)  # ground truth is dropped on purpose
        except (TypeError, ValueError) as exc:
            raise ApiError(400, "bad_request", f"invalid phantom spec: {exc}")
        return vol
    if "volume" in body:
        spec = body["volume"]
        try:
            dims = tuple(int(d) for d in spec["dims"])
            raw = base64.b64decode(spec["data"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, "bad_request", f"invalid volume payload: {exc}")
        data = np.frombuffer(raw, dtype="<f4")
        if data.size != int(np.prod(dims)):
            raise ApiError(400, "dims_mismatch",
                           f"payload holds {data.size} voxels, dims say {np.prod(dims)}")
        try:
            return Volume(data.reshape(dims).astype(np.float32))
        except ValueError as exc:
            raise ApiError(400, "bad_request", str(exc))
    raise ApiError(400, "bad_request", "body needs 'phantom' or 'volume'")


def _guidance_payload(session: ApiSession) -> dict:
    state = session.state
    cfg = session.cfg
    is_first = state.gamma.count() == 0
    proposals = {}
    if is_first:
        for axis in cfg.guidance.axes:
            picks = random_slices(state.volume.data, axis,
                                  state.gamma.indices(axis), cfg.guidance.tau,
                                  session.rng)
            proposals[str(axis)] = [{"index": i, "mass": None} for i in picks]
    else:
        r = residual_map(state.proxy_field().astype(np.float64), session.pred(),
                         state.gamma, cfg.guidance)
        for axis in cfg.guidance.axes:
            labeled = set(state.gamma.indices(axis))
            masses = slice_masses(r, axis)
            total = float(sum(m for i, m in enumerate(masses) if i not in labeled))
            picks = propose_slices(r, axis, labeled, cfg.guidance.tau, session.rng)
            proposals[str(axis)] = [
                {"index": i, "mass": float(masses[i]) / total if total > 0 else 0.0}
                for i in picks
            ]
    return {"is_first": is_first, "proposals": proposals}


def create_app(svc: ServiceConfig | None = None) -> FastAPI:
    svc = svc or ServiceConfig()
    app = FastAPI(title="dynaseg", version="0.1.0")
    sessions: dict[str, ApiSession] = {}
    registry_lock = threading.Lock()
    counter = {"n": 0}

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    def _get(session_id: str) -> ApiSession:
        session = sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session

    @app.post("/sessions", status_code=201)
    async def create_session(body: dict):
        with registry_lock:
            if len(sessions) >= svc.max_sessions:
                raise ApiError(429, "capacity_exhausted", "too many live sessions")
            volume = _volume_from_payload(body)
            counter["n"] += 1
            seed = svc.seed + counter["n"]
            cfg = InteractiveConfig(quota=svc.quota, inner_steps=svc.inner_steps,
                                    eta=svc.eta, seed=seed)
            session = ApiSession(
                session_id=uuid.uuid4().hex,
                state=SessionState(volume=volume),
                net=ConvNet3D(SegmenterSpec(channels=svc.channels, seed=seed)),
                cfg=cfg,
                rng=np.random.default_rng(seed),
            )
            sessions[session.session_id] = session
        return {"session_id": session.session_id, "dims": list(volume.dims),
                "status": session.status, "round": session.state.round,
                "quota": cfg.quota}

    @app.get("/sessions/{session_id}/bundle")
    async def get_bundle(session_id: str, plane: int = Query(0), index: int = Query(0)):
        session = _get(session_id)
        with session.lock:
            state = session.state
            dims = state.volume.dims
            if plane not in (0, 1, 2):
                raise ApiError(400, "bad_request", "plane must be 0, 1 or 2")
            if not 0 <= index < dims[plane]:
                raise ApiError(400, "bad_request",
                               f"index {index} out of range for plane {plane}")
            image = np.take(state.volume.data, index, axis=plane)
            # viewed along an annotation plane, the overlay is that plane's
            # propagated field, so labeled slices show the drawn mask verbatim
            if plane in state.planes:
                proxy = np.take(state.planes[plane].field, index, axis=plane)
            else:
                proxy = np.take(state.proxy_field(), index, axis=plane)
            pred = (np.take(session.pred(), index, axis=plane) > 0.5).astype(np.uint8)
            gamma = {str(a): state.gamma.indices(a) for a in (0, 1, 2)}
            return {
                "dims": list(dims),
                "plane": plane,
                "index": index,
                "image": base64.b64encode(
                    image.astype("<f4").tobytes()).decode("ascii"),
                "image_shape": list(image.shape),
                "proxy_overlay": encode_mask(proxy),
                "pred_overlay": encode_mask(pred),
                "gamma": gamma,
                "round": state.round,
                "status": session.status,
                "guidance": _guidance_payload(session),
            }

    @app.post("/sessions/{session_id}/annotations")
    async def post_annotation(session_id: str, body: dict):
        session = _get(session_id)
        with session.lock:
            key = body.get("idempotency_key")
            if key is not None and key in session.seen_keys:
                return session.seen_keys[key]
            state = session.state
            cfg = session.cfg
            try:
                plane = int(body["plane"])
                index = int(body["index"])
                rle = body["mask"]
            except (KeyError, TypeError, ValueError) as exc:
                raise ApiError(400, "bad_request", f"invalid annotation: {exc}")
            if plane not in cfg.guidance.axes:
                raise ApiError(400, "bad_request",
                               f"plane {plane} is not an annotation plane")
            dims = state.volume.dims
            if not 0 <= index < dims[plane]:
                raise ApiError(400, "bad_request", "slice index out of range")
            if index in state.gamma.indices(plane):
                raise ApiError(409, "already_labeled",
                               f"plane {plane} slice {index} already annotated")
            if state.gamma.count() >= cfg.quota:
                raise ApiError(409, "quota_exhausted", "annotation quota reached")
            shape = tuple(d for a, d in enumerate(dims) if a != plane)
            try:
                mask = decode_mask(rle, shape)
            except (ValueError, TypeError, KeyError) as exc:
                raise ApiError(400, "dims_mismatch", f"mask does not fit slice: {exc}")

            state.gamma = state.gamma.with_added(plane, index, mask)
            _refresh_planes(session.state, {plane: {index: mask}}, cfg)
            session.status = "training"
            x = state.volume.data.astype(np.float64)
            target = state.proxy_field().astype(np.float64)
            weights = confidence_weights(cfg.weight_form, state.gamma, dims,
                                         axes=cfg.guidance.axes,
                                         omega=cfg.omega).weights
            sample = TrainSample(x=x, target=target, weight=weights,
                                 step=state.round)
            loss_cfg = LossConfig(lambda_l=1.0, weight_form=cfg.weight_form,
                                  omega=cfg.omega)
            loss = None
            for _ in range(cfg.inner_steps):
                loss, grad = weighted_batch_loss(session.net, sample, [], loss_cfg)
                apply_sgd(session.net, grad, cfg.eta)
            session.loss_history.append(float(loss))
            state.round += 1
            done = state.gamma.count() >= cfg.quota
            session.status = "complete" if done else "awaiting-annotation"
            pred_mask = BinaryMask((session.pred() > 0.5).astype(np.uint8))
            response = {
                "round": state.round,
                "status": session.status,
                "dice_proxy_pred": dice(BinaryMask(state.proxy_field()), pred_mask),
                "labor_fraction": labor_cost(state.gamma, dims),
                "guidance": {} if done else _guidance_payload(session),
            }
            if key is not None:
                session.seen_keys[key] = response
            return response

    @app.get("/sessions/{session_id}/metrics")
    async def get_metrics(session_id: str):
        session = _get(session_id)
        with session.lock:
            state = session.state
            pred_mask = BinaryMask((session.pred() > 0.5).astype(np.uint8))
            return {
                "round": state.round,
                "status": session.status,
                "gamma_count": state.gamma.count(),
                "labor_fraction": labor_cost(state.gamma, state.volume.dims),
                "dice_proxy_pred": dice(BinaryMask(state.proxy_field()), pred_mask),
                "loss_history": session.loss_history,
            }

    @app.delete("/sessions/{session_id}")
    async def delete_session(session_id: str):
        with registry_lock:
            existed = sessions.pop(session_id, None) is not None
        return {"deleted": existed}

    return app
