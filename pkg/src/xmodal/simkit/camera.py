"""Pinhole depth + grayscale camera, raycast against the room and its boxes.

Ray directions carry a unit forward component, so the ray parameter of the
nearest hit is directly the planar (optical-axis) depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xmodal._accel import njit, select
from xmodal.config import SimConfig
from xmodal.simkit.dynamics import RobotState
from xmodal.simkit.room import RoomBatch, RoomSpec, pack_rooms

LIGHT_DIR = np.array([-0.3, 0.5, 0.8]) / np.linalg.norm([-0.3, 0.5, 0.8])
SKY_GRAY = 0.0

HIT_NONE = -1
HIT_ROOM = 0  # boxes are 1 + obstacle index


@dataclass
class SensorFrame:
    depth: np.ndarray  # (H, W) float32 in [0, 1]; 0 = no return
    gray: np.ndarray  # (H, W) float32 in [0, 1]
    hit_id: np.ndarray  # (H, W) int
    perturbation: np.ndarray  # (6,) dx, dy, dz, roll, pitch, yaw


def camera_rays(height: int, width: int, hfov_deg: float, vfov_deg: float) -> np.ndarray:
    """(H*W, 3) camera-frame directions (forward, left, up) with forward = 1."""
    tx = np.tan(np.deg2rad(hfov_deg) / 2.0)
    ty = np.tan(np.deg2rad(vfov_deg) / 2.0)
    u = (2.0 * (np.arange(width) + 0.5) / width - 1.0) * tx
    v = (1.0 - 2.0 * (np.arange(height) + 0.5) / height) * ty
    vv, uu = np.meshgrid(v, u, indexing="ij")
    return np.stack([np.ones_like(uu), -uu, vv], axis=-1).reshape(-1, 3)


def rotation_zyx(yaw, pitch, roll) -> np.ndarray:
    """R = Rz(yaw) Ry(pitch) Rx(roll), batched over leading dims."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    return np.stack(
        [
            np.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], -1),
            np.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], -1),
            np.stack([-sp, cp * sr, cp * cr], -1),
        ],
        -2,
    )


def camera_pose(state: RobotState, perturbation: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """World origins (N, 3) and rotations (N, 3, 3) of yaw-aligned cameras."""
    n = len(state)
    pert = np.zeros((n, 6)) if perturbation is None else np.broadcast_to(perturbation, (n, 6))
    base = rotation_zyx(state.yaw, np.zeros(n), np.zeros(n))
    origin = state.position + np.einsum("nij,nj->ni", base, pert[:, :3])
    rot = rotation_zyx(state.yaw + pert[:, 5], pert[:, 4], pert[:, 3])
    return origin, rot


def sample_perturbation(rng: np.random.Generator, n: int, cfg: SimConfig) -> np.ndarray:
    t = rng.uniform(-cfg.camera_translation, cfg.camera_translation, size=(n, 3))
    r = np.deg2rad(rng.uniform(-cfg.camera_rotation_deg, cfg.camera_rotation_deg, size=(n, 3)))
    return np.concatenate([t, r], axis=1)


# ------------------------------------------------------------------ kernels


@njit
def _raycast_numba(origins, rot, rays, dims, centers, half, yaw_cs, count, t_out, id_out, n_out):
    inf = np.inf
    for e in range(origins.shape[0]):
        ox = origins[e, 0]
        oy = origins[e, 1]
        oz = origins[e, 2]
        lx = dims[e, 0]
        ly = dims[e, 1]
        lz = dims[e, 2]
        for k in range(rays.shape[0]):
            cx = rays[k, 0]
            cy = rays[k, 1]
            cz = rays[k, 2]
            dx = rot[e, 0, 0] * cx + rot[e, 0, 1] * cy + rot[e, 0, 2] * cz
            dy = rot[e, 1, 0] * cx + rot[e, 1, 1] * cy + rot[e, 1, 2] * cz
            dz = rot[e, 2, 0] * cx + rot[e, 2, 1] * cy + rot[e, 2, 2] * cz
            # room exit
            tx = inf
            nxr = 0.0
            if dx > 0.0:
                tx = (lx - ox) / dx
                nxr = -1.0
            elif dx < 0.0:
                tx = (0.0 - ox) / dx
                nxr = 1.0
            ty = inf
            nyr = 0.0
            if dy > 0.0:
                ty = (ly - oy) / dy
                nyr = -1.0
            elif dy < 0.0:
                ty = (0.0 - oy) / dy
                nyr = 1.0
            tz = inf
            top = False
            if dz > 0.0:
                tz = (lz - oz) / dz
                top = True
            elif dz < 0.0:
                tz = (0.0 - oz) / dz
            best = inf
            hid = -1
            bnx = 0.0
            bny = 0.0
            bnz = 0.0
            if tx <= ty and tx <= tz:
                best = tx
                hid = 0
                bnx = nxr
            elif ty <= tz:
                best = ty
                hid = 0
                bny = nyr
            elif not top:
                best = tz
                hid = 0
                bnz = 1.0
            # boxes
            for b in range(count[e]):
                c = yaw_cs[e, b, 0]
                s = yaw_cs[e, b, 1]
                rx = ox - centers[e, b, 0]
                ry = oy - centers[e, b, 1]
                rz = oz - centers[e, b, 2]
                lo0 = c * rx + s * ry
                lo1 = -s * rx + c * ry
                lo2 = rz
                ld0 = c * dx + s * dy
                ld1 = -s * dx + c * dy
                ld2 = dz
                tnear = -inf
                tfar = inf
                axis = -1
                miss = False
                for a in range(3):
                    if a == 0:
                        o = lo0
                        d = ld0
                    elif a == 1:
                        o = lo1
                        d = ld1
                    else:
                        o = lo2
                        d = ld2
                    h = half[e, b, a]
                    if d == 0.0:
                        if o < -h or o > h:
                            miss = True
                            break
                        continue
                    t1 = (-h - o) / d
                    t2 = (h - o) / d
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tnear:
                        tnear = t1
                        axis = a
                    if t2 < tfar:
                        tfar = t2
                if miss or axis < 0 or tnear > tfar or tnear <= 0.0 or tnear >= best:
                    continue
                best = tnear
                hid = 1 + b
                if axis == 0:
                    sgn = -1.0 if ld0 > 0.0 else 1.0
                    bnx = c * sgn
                    bny = s * sgn
                    bnz = 0.0
                elif axis == 1:
                    sgn = -1.0 if ld1 > 0.0 else 1.0
                    bnx = -s * sgn
                    bny = c * sgn
                    bnz = 0.0
                else:
                    bnx = 0.0
                    bny = 0.0
                    bnz = -1.0 if ld2 > 0.0 else 1.0
            t_out[e, k] = best
            id_out[e, k] = hid
            n_out[e, k, 0] = bnx
            n_out[e, k, 1] = bny
            n_out[e, k, 2] = bnz


def _raycast_numpy(origins, rot, rays, dims, centers, half, yaw_cs, count, t_out, id_out, n_out):
    inf = np.inf
    cx, cy, cz = rays[:, 0], rays[:, 1], rays[:, 2]
    for e in range(origins.shape[0]):
        ox, oy, oz = origins[e]
        lx, ly, lz = dims[e]
        r = rot[e]
        dx = r[0, 0] * cx + r[0, 1] * cy + r[0, 2] * cz
        dy = r[1, 0] * cx + r[1, 1] * cy + r[1, 2] * cz
        dz = r[2, 0] * cx + r[2, 1] * cy + r[2, 2] * cz
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(dx > 0.0, (lx - ox) / dx, np.where(dx < 0.0, (0.0 - ox) / dx, inf))
            ty = np.where(dy > 0.0, (ly - oy) / dy, np.where(dy < 0.0, (0.0 - oy) / dy, inf))
            tz = np.where(dz > 0.0, (lz - oz) / dz, np.where(dz < 0.0, (0.0 - oz) / dz, inf))
        nxr = np.where(dx > 0.0, -1.0, np.where(dx < 0.0, 1.0, 0.0))
        nyr = np.where(dy > 0.0, -1.0, np.where(dy < 0.0, 1.0, 0.0))
        top = dz > 0.0
        sel_x = (tx <= ty) & (tx <= tz)
        sel_y = ~sel_x & (ty <= tz)
        sel_z = ~sel_x & ~sel_y & ~top
        best = np.where(sel_x, tx, np.where(sel_y, ty, np.where(sel_z, tz, inf)))
        hid = np.where(sel_x | sel_y | sel_z, 0, -1)
        bn = np.zeros(rays.shape)
        bn[:, 0] = np.where(sel_x, nxr, 0.0)
        bn[:, 1] = np.where(sel_y, nyr, 0.0)
        bn[:, 2] = np.where(sel_z, 1.0, 0.0)
        for b in range(count[e]):
            c, s = yaw_cs[e, b]
            rx = ox - centers[e, b, 0]
            ry = oy - centers[e, b, 1]
            rz = oz - centers[e, b, 2]
            lo = (c * rx + s * ry, -s * rx + c * ry, rz)
            ld = (c * dx + s * dy, -s * dx + c * dy, dz)
            tnear = np.full(dx.shape, -inf)
            tfar = np.full(dx.shape, inf)
            axis = np.full(dx.shape, -1)
            miss = np.zeros(dx.shape, dtype=bool)
            for a in range(3):
                o, d, h = lo[a], ld[a], half[e, b, a]
                zero = d == 0.0
                miss |= zero & ((o < -h) | (o > h))
                with np.errstate(divide="ignore", invalid="ignore"):
                    t1 = (-h - o) / d
                    t2 = (h - o) / d
                lo_t = np.where(zero, -inf, np.minimum(t1, t2))
                hi_t = np.where(zero, inf, np.maximum(t1, t2))
                upd = lo_t > tnear
                tnear = np.where(upd, lo_t, tnear)
                axis = np.where(upd, a, axis)
                tfar = np.minimum(tfar, hi_t)
            ok = ~miss & (axis >= 0) & (tnear <= tfar) & (tnear > 0.0) & (tnear < best)
            if not ok.any():
                continue
            best = np.where(ok, tnear, best)
            hid = np.where(ok, 1 + b, hid)
            sx = np.where(ld[0] > 0.0, -1.0, 1.0)
            sy = np.where(ld[1] > 0.0, -1.0, 1.0)
            sz = np.where(ld[2] > 0.0, -1.0, 1.0)
            nx = np.where(axis == 0, c * sx, np.where(axis == 1, -s * sy, 0.0))
            ny = np.where(axis == 0, s * sx, np.where(axis == 1, c * sy, 0.0))
            nz = np.where(axis == 2, sz, 0.0)
            bn[:, 0] = np.where(ok, nx, bn[:, 0])
            bn[:, 1] = np.where(ok, ny, bn[:, 1])
            bn[:, 2] = np.where(ok, nz, bn[:, 2])
        t_out[e] = best
        id_out[e] = hid
        n_out[e] = bn


def raycast(origins, rot, rays, rooms: RoomBatch, backend: str | None = None):
    """Nearest-hit ray parameter, hit id and world normal for every ray.

    ``origins`` (N, 3) and ``rot`` (N, 3, 3) give camera poses, ``rays``
    (P, 3) the camera-frame directions. Returns t (N, P) with inf for no hit,
    ids (N, P) and world normals (N, P, 3).
    """
    n, p = origins.shape[0], rays.shape[0]
    t = np.empty((n, p))
    ids = np.empty((n, p), dtype=np.int64)
    normals = np.empty((n, p, 3))
    kernel = select(_raycast_numba, _raycast_numpy, backend)
    kernel(
        np.ascontiguousarray(origins, dtype=np.float64),
        np.ascontiguousarray(rot, dtype=np.float64),
        np.ascontiguousarray(rays, dtype=np.float64),
        rooms.dims,
        rooms.centers,
        rooms.half,
        rooms.yaw_cs,
        rooms.count,
        t,
        ids,
        normals,
    )
    return t, ids, normals


# ------------------------------------------------------------------ rendering


class Camera:
    def __init__(self, cfg: SimConfig | None = None, size: int | None = None):
        self.cfg = cfg or SimConfig()
        self.size = size or self.cfg.render_size
        self.rays = camera_rays(self.size, self.size, self.cfg.hfov_deg, self.cfg.vfov_deg)

    def render_batch(
        self,
        rooms: RoomBatch,
        state: RobotState,
        perturbation: np.ndarray | None = None,
        backend: str | None = None,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns depth (N, H, W), gray (N, H, W) as float32 and hit ids."""
        origin, rot = camera_pose(state, perturbation)
        t, ids, normals = raycast(origin, rot, self.rays, rooms, backend)
        depth, gray = self.shade(t, ids, normals, rooms)
        shape = (len(state), self.size, self.size)
        return depth.reshape(shape), gray.reshape(shape), ids.reshape(shape)

    def shade(self, t, ids, normals, rooms: RoomBatch):
        d_max = self.cfg.d_max
        depth = np.where(t <= d_max, t / d_max, 0.0)
        lambert = np.maximum(normals @ LIGHT_DIR, 0.0)
        box_idx = np.clip(ids - 1, 0, rooms.albedo.shape[1] - 1)
        albedo = np.where(ids > 0, np.take_along_axis(rooms.albedo, box_idx, axis=1), self.cfg.wall_albedo)
        gray = np.where(ids >= 0, np.minimum(albedo * lambert + self.cfg.ambient, 1.0), SKY_GRAY)
        return depth.astype(np.float32), gray.astype(np.float32)

    def render(
        self, room: RoomSpec, state: RobotState, perturbation: np.ndarray | None = None, backend: str | None = None
    ) -> SensorFrame:
        pert = np.zeros(6) if perturbation is None else np.asarray(perturbation, dtype=np.float64)
        depth, gray, ids = self.render_batch(pack_rooms([room]), state.take(slice(0, 1)), pert[None], backend)
        return SensorFrame(depth[0], gray[0], ids[0], pert)


def render(room: RoomSpec, state: RobotState, perturbation=None, cfg: SimConfig | None = None, size=None) -> SensorFrame:
    return Camera(cfg, size).render(room, state, perturbation)
