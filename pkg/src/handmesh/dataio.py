"""Dataset plumbing: manifests, ingestion, synthetic data, OBJ export.

A dataset is a JSON-lines manifest where each line names a sample id and
a binary blob holding four float64 arrays (image, 2-D keypoints, 3-D
joints, vertices) in a fixed order.  The format is documented byte for
byte in docs/formats.md so other implementations can interoperate.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

BLOB_MAGIC = b"HMB1"
BLOB_FIELDS = ("image", "kp2d", "joints3d", "vertices")
KP2D_TOLERANCE = 0.25  # loose-crop slack around the [0, 1] box
FREIHAND_SIZE = 224  # FreiHand crop resolution; its K matrices live on this grid


@dataclass
class HandSample:
    """One training or evaluation record, targets in meters, root-relative."""

    image: np.ndarray  # 3 x S x S in [0, 1]
    kp2d: np.ndarray  # J x 2, normalized crop coordinates
    joints3d: np.ndarray  # J x 3
    vertices: np.ndarray  # V x 3
    id: str = ""

    def __post_init__(self):
        self.image = np.ascontiguousarray(self.image, dtype=np.float64)
        self.kp2d = np.ascontiguousarray(self.kp2d, dtype=np.float64)
        self.joints3d = np.ascontiguousarray(self.joints3d, dtype=np.float64)
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)

    def validate(self):
        for name in BLOB_FIELDS:
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise DataError(f"sample {self.id!r}: field {name} has non-finite values")
        if self.image.ndim != 3:
            raise DataError(f"sample {self.id!r}: field image must be 3-D (C, H, W)")
        if self.image.min() < 0.0 or self.image.max() > 1.0:
            raise DataError(f"sample {self.id!r}: field image outside [0, 1]")
        if self.kp2d.ndim != 2 or self.kp2d.shape[1] != 2:
            raise DataError(f"sample {self.id!r}: field kp2d must be J x 2")
        if self.joints3d.shape != (self.kp2d.shape[0], 3):
            raise DataError(
                f"sample {self.id!r}: field joints3d must be {self.kp2d.shape[0]} x 3"
            )
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DataError(f"sample {self.id!r}: field vertices must be V x 3")
        lo, hi = -KP2D_TOLERANCE, 1.0 + KP2D_TOLERANCE
        if self.kp2d.min() < lo or self.kp2d.max() > hi:
            raise DataError(
                f"sample {self.id!r}: field kp2d outside crop tolerance [{lo}, {hi}]"
            )


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError(f"focal lengths must be positive, got {self.fx}, {self.fy}")

    @classmethod
    def from_matrix(cls, k) -> "CameraIntrinsics":
        k = np.asarray(k, dtype=np.float64)
        if k.shape != (3, 3):
            raise DataError(f"camera matrix must be 3 x 3, got {k.shape}")
        return cls(fx=k[0, 0], fy=k[1, 1], cx=k[0, 2], cy=k[1, 2])


def project_points(xyz, cam: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of N x 3 camera-frame points to pixel coordinates."""
    xyz = np.asarray(xyz, dtype=np.float64)
    z = xyz[:, 2]
    bad = np.where(z <= 0)[0]
    if bad.size:
        raise DataError(f"point {bad[0]} has depth {z[bad[0]]}, cannot project")
    u = cam.fx * xyz[:, 0] / z + cam.cx
    v = cam.fy * xyz[:, 1] / z + cam.cy
    return np.stack([u, v], axis=1)


def _write_blob(path, sample: HandSample):
    arrays = [getattr(sample, name) for name in BLOB_FIELDS]
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def _read_blob(path, sample_id: str) -> list:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"sample {sample_id!r}: blob {path} unreadable: {exc}") from None
    if raw[:4] != BLOB_MAGIC:
        raise DataError(f"sample {sample_id!r}: blob {path} has bad magic {raw[:4]!r}")
    off = 4
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
        off += 8 * n
        arrays.append(arr.copy())
    return arrays


def write_manifest(samples, out_dir, name: str = "manifest.jsonl") -> Path:
    """Write samples to out_dir as a manifest plus one blob per sample."""
    out_dir = Path(out_dir)
    blob_dir = out_dir / "blobs"
    blob_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / name
    with open(manifest, "w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            if not sample.id:
                sample.id = f"sample_{i:08d}"
            sample.validate()
            rel = f"blobs/{sample.id}.bin"
            _write_blob(out_dir / rel, sample)
            fh.write(json.dumps({"id": sample.id, "blob": rel}) + "\n")
    return manifest


def load_manifest(path):
    """Yield HandSamples in manifest order, validating each on load."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest {path} does not exist")
    base = path.parent
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"manifest line {line_no} is not JSON: {exc}") from None
            sid = rec.get("id", f"line_{line_no}")
            arrays = _read_blob(base / rec["blob"], sid)
            if len(arrays) != len(BLOB_FIELDS):
                raise DataError(
                    f"sample {sid!r}: blob holds {len(arrays)} arrays, "
                    f"expected {len(BLOB_FIELDS)}"
                )
            sample = HandSample(*arrays, id=sid)
            sample.validate()
            yield sample


def count_manifest(path) -> int:
    with open(path, "r", encoding="utf-8") as fh:
        return sum(1 for line in fh if line.strip())


def _seeded_rng(key) -> np.random.Generator:
    """Generator from a mixed tuple of strings and ints, deterministically."""
    entropy = []
    for part in key if isinstance(key, tuple) else (key,):
        if isinstance(part, str):
            entropy.append(int.from_bytes(part.encode("utf-8"), "little"))
        else:
            entropy.append(int(part) & (2**64 - 1))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _noise_image(seed_key, size: int) -> np.ndarray:
    return _seeded_rng(seed_key).uniform(0.0, 1.0, size=(3, size, size))


def _load_image_file(path, size: int) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        img = img.convert("RGB")
        if img.size != (size, size):
            img = img.resize((size, size), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def ingest_freihand(
    xyz_file,
    verts_file,
    k_file,
    image_dir,
    out_dir,
    image_size: int = 224,
    limit: int = 0,
) -> int:
    """Convert FreiHand-style annotation arrays into a manifest.

    The three JSON files are parallel arrays: per sample a 21x3 joint list
    (meters, camera frame), a 778x3 vertex list, and a 3x3 intrinsic
    matrix.  Joints project to 2-D through the intrinsics, 3-D targets are
    re-centered on the wrist joint, and 2-D targets are divided by the
    source resolution the intrinsics live on (FreiHand ships 224x224
    crops), which makes them independent of the output image_size.  When
    image_dir is empty the images are deterministic noise, which keeps
    annotation-only workflows runnable.
    """
    xyz = json.loads(Path(xyz_file).read_text())
    verts = json.loads(Path(verts_file).read_text())
    ks = json.loads(Path(k_file).read_text())
    if not len(xyz) == len(verts) == len(ks):
        raise DataError(
            f"annotation files disagree: {len(xyz)} joints, "
            f"{len(verts)} meshes, {len(ks)} cameras"
        )
    if limit:
        xyz, verts, ks = xyz[:limit], verts[:limit], ks[:limit]

    def build(i):
        joints = np.asarray(xyz[i], dtype=np.float64)
        vertices = np.asarray(verts[i], dtype=np.float64)
        cam = CameraIntrinsics.from_matrix(ks[i])
        kp2d = project_points(joints, cam) / FREIHAND_SIZE
        root = joints[0].copy()
        image = None
        if image_dir:
            for pattern in (f"{i:08d}.jpg", f"{i:08d}.png"):
                candidate = Path(image_dir) / pattern
                if candidate.exists():
                    image = _load_image_file(candidate, image_size)
                    break
        if image is None:
            image = _noise_image(("freihand", i), image_size)
        return HandSample(
            image=image,
            kp2d=kp2d,
            joints3d=joints - root,
            vertices=vertices - root,
            id=f"freihand_{i:08d}",
        )

    write_manifest((build(i) for i in range(len(xyz))), out_dir)
    return len(xyz)


SYNTH_FOCAL_224 = 500.0  # scaled linearly for other image sizes
SYNTH_DEPTH = 0.6  # meters from the synthetic camera
SYNTH_BASES = 8
SYNTH_BASIS_AMPLITUDE = 3e-4  # per-coordinate half-width of one basis shape
SYNTH_XY_SHIFT = 0.03  # per-sample hand placement in the camera frame
SYNTH_Z_SHIFT = 0.05


def make_synthetic(
    n: int,
    seed: int,
    out_dir,
    regressor,
    image_size: int = 224,
) -> Path:
    """Generate a deterministic synthetic dataset around a linear shape model.

    Vertices are a seeded mean shape plus a small seeded basis mixed by
    per-sample coefficients; joints come from the regressor, 2-D keypoints
    from a fixed synthetic camera, images are seeded noise.  Same (n,
    seed) always reproduces the same bytes.
    """
    if n < 1:
        raise DataError(f"need at least one sample, got {n}")
    v = regressor.num_vertices
    model_rng = _seeded_rng(("handshape", seed))
    # bounded shape model plus bounded placement: every projected keypoint
    # stays inside the crop by construction, no rejection sampling needed
    mean = model_rng.uniform(-0.02, 0.02, size=(v, 3))
    amp = SYNTH_BASIS_AMPLITUDE
    basis = model_rng.uniform(-amp, amp, size=(SYNTH_BASES, v, 3))
    focal = SYNTH_FOCAL_224 * image_size / 224.0
    cam = CameraIntrinsics(
        fx=focal, fy=focal, cx=image_size / 2.0, cy=image_size / 2.0
    )

    def build(i):
        rng = _seeded_rng(("handsample", seed, i))
        betas = np.clip(rng.normal(0.0, 1.0, size=SYNTH_BASES), -2.0, 2.0)
        vertices = mean + np.tensordot(betas, basis, axes=1)
        joints = regressor.matrix @ vertices
        if regressor.tip_indices:
            joints = np.concatenate([joints, vertices[list(regressor.tip_indices)]])
        joints = joints[list(regressor.joint_order)]
        # camera-frame placement varies per sample; root-centering removes
        # it from the 3-D targets, so it only enriches the 2-D supervision
        offset = np.array(
            [
                rng.uniform(-SYNTH_XY_SHIFT, SYNTH_XY_SHIFT),
                rng.uniform(-SYNTH_XY_SHIFT, SYNTH_XY_SHIFT),
                SYNTH_DEPTH + rng.uniform(-SYNTH_Z_SHIFT, SYNTH_Z_SHIFT),
            ]
        )
        kp2d = project_points(joints + offset, cam) / image_size
        root = joints[0].copy()
        return HandSample(
            image=_noise_image((seed, i), image_size),
            kp2d=kp2d,
            joints3d=joints - root,
            vertices=vertices - root,
            id=f"synth_{seed}_{i:06d}",
        )

    return write_manifest((build(i) for i in range(n)), out_dir)


def export_obj(vertices, path, faces=None):
    """Write vertices (and optional 0-based triangles) as a plain-text OBJ."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise DataError(f"OBJ export needs V x 3 vertices, got {vertices.shape}")
    n = vertices.shape[0]
    lines = [f"v {x:.8f} {y:.8f} {z:.8f}" for x, y, z in vertices]
    if faces is not None:
        for tri in faces:
            a, b, c = (int(t) for t in tri)
            for idx in (a, b, c):
                if not 0 <= idx < n:
                    raise DataError(f"face index {idx} outside 0..{n - 1}")
            lines.append(f"f {a + 1} {b + 1} {c + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_obj_vertices(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("v "):
                rows.append([float(tok) for tok in line.split()[1:4]])
    return np.asarray(rows, dtype=np.float64)


def load_faces(path) -> list:
    """Triangle asset: one 0-based `a b c` triple per line, # comments allowed."""
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"face line {line!r} does not have three indices")
            faces.append(tuple(int(p) for p in parts))
    return faces
