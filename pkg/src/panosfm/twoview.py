"""Relative orientation of two spherical images.

Implements the linear eight-point essential-matrix solver on unit observation
rays, RANSAC with the vector-to-plane geodesic angular error, decomposition
with the spherical cheirality test p.(R P + t) > 0, and linear two-ray
triangulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindRay, CheiralityFailure, Degenerate, NoConsensus, NoParallax
from .geometry import ImageDims, Pose, skew

# Second-smallest singular value below this (relative to the largest) means
# the stacked epipolar system has a solution family, not a unique model.
_RANK_TOL = 1e-9


@dataclass(frozen=True)
class RelativePose:
    """Pose of camera b relative to camera a, translation scaled to unit norm."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(t)
        if norm <= 0:
            raise ValueError("relative translation must be nonzero")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t / norm)

    def to_pose(self) -> Pose:
        return Pose(self.R, self.t)


@dataclass(frozen=True)
class RansacParams:
    """Knobs shared by the two-view and resection RANSAC loops."""

    e_p: float = 4.0
    max_iterations: int = 10000
    confidence: float = 0.9999
    seed: int = 0

    def __post_init__(self):
        if self.e_p < 0:
            raise ValueError("pixel threshold must be non-negative")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


def pixel_threshold_to_angle(e_p: float, dims: ImageDims) -> float:
    """Convert a pixel error threshold to the angular threshold
    e_a = 2*pi*e_p / max(W, H)."""
    if e_p < 0:
        raise ValueError("pixel threshold must be non-negative")
    return 2.0 * math.pi * e_p / max(dims.width, dims.height)


def project_to_essential(E: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix onto the essential manifold and normalize.

    The two nonzero singular values are replaced by their mean and the result
    is scaled to Frobenius norm sqrt(2), with a canonical sign (the largest
    entry by magnitude is positive).
    """
    U, d, Vt = np.linalg.svd(np.asarray(E, dtype=np.float64))
    s = (d[0] + d[1]) / 2.0
    if s <= 0:
        raise Degenerate("matrix has no essential-manifold projection")
    out = U @ np.diag([1.0, 1.0, 0.0]) @ Vt
    flat = out.ravel()
    if flat[int(np.argmax(np.abs(flat)))] < 0:
        out = -out
    return out


def essential_8point(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Least-squares essential matrix from >= 8 ray correspondences.

    Solves p2^T E p1 = 0 stacked over all correspondences via SVD, then
    projects the minimizer onto the essential manifold.

    Raises Degenerate when the linear system does not determine a unique
    epipolar geometry (e.g. zero baseline).
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p1.shape != p2.shape or p1.ndim != 2 or p1.shape[1] != 3:
        raise ValueError("correspondences must be matching (n, 3) arrays")
    n = p1.shape[0]
    if n < 8:
        raise ValueError(f"need at least 8 correspondences, got {n}")
    # Row for correspondence i: coefficients of E.ravel() in p2^T E p1 = 0,
    # i.e. the outer product p2_i p1_i^T flattened row-major.
    A = (p2[:, :, None] * p1[:, None, :]).reshape(n, 9)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s[0] <= 0 or s[7] <= _RANK_TOL * s[0]:
        raise Degenerate("epipolar system is rank-deficient")
    return project_to_essential(Vt[-1].reshape(3, 3))


def angular_epipolar_error(
    E: np.ndarray,
    p1: np.ndarray,
    p2: np.ndarray,
    symmetric: bool = False,
) -> np.ndarray | float:
    """Vector-to-plane geodesic angular error of ray correspondences.

    e = |asin(p2 . n)| with n = E p1 / ||E p1|| the epipolar-plane normal.
    Correspondences whose epipolar normal vanishes (||E p1|| < 1e-15) get the
    maximal error pi/2. With symmetric=True the maximum of the two directed
    errors (E and E^T) is returned.

    Accepts single rays of shape (3,) or batches (n, 3).
    """
    E = np.asarray(E, dtype=np.float64)
    a = np.atleast_2d(np.asarray(p1, dtype=np.float64))
    b = np.atleast_2d(np.asarray(p2, dtype=np.float64))
    err = _directed_angular_error(E, a, b)
    if symmetric:
        err = np.maximum(err, _directed_angular_error(E.T, b, a))
    if np.asarray(p1).ndim == 1:
        return float(err[0])
    return err


def _directed_angular_error(E: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    normals = p1 @ E.T
    norms = np.linalg.norm(normals, axis=1)
    safe = np.where(norms < 1e-15, 1.0, norms)
    sin_e = np.abs(np.sum(p2 * normals, axis=1)) / safe
    err = np.arcsin(np.clip(sin_e, 0.0, 1.0))
    return np.where(norms < 1e-15, np.pi / 2.0, err)


def estimate_essential_ransac(
    p1: np.ndarray,
    p2: np.ndarray,
    dims: ImageDims,
    params: RansacParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Robustly estimate the essential matrix of two spherical views.

    Hypothesize-and-verify with minimal 8-ray samples; inliers are counted
    under the symmetric angular error at the Eq.-(8)-converted threshold.
    The best model (by inlier count, ties by lower total inlier error, then
    earlier iteration) is re-estimated on its inliers and the mask is
    reclassified. Deterministic for a fixed params.seed.

    Returns (E, inlier_mask). Raises NoConsensus when no model reaches 8
    inliers.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    n = p1.shape[0]
    if n < 8:
        raise NoConsensus(f"need at least 8 correspondences, got {n}")

    e_a = pixel_threshold_to_angle(params.e_p, dims)
    rng = np.random.default_rng(params.seed)

    best_E = None
    best_count = 0
    best_err_sum = np.inf
    best_mask = None
    max_needed = params.max_iterations

    it = 0
    while it < min(max_needed, params.max_iterations):
        it += 1
        sample = rng.choice(n, size=8, replace=False)
        try:
            E = essential_8point(p1[sample], p2[sample])
        except Degenerate:
            continue
        err = angular_epipolar_error(E, p1, p2, symmetric=True)
        mask = err < e_a
        count = int(mask.sum())
        err_sum = float(err[mask].sum())
        if count > best_count or (count == best_count and err_sum < best_err_sum):
            best_E, best_count, best_err_sum, best_mask = E, count, err_sum, mask
            if count >= 8:
                w = count / n
                if w >= 1.0:
                    max_needed = it
                else:
                    denom = math.log1p(-(w ** 8))
                    max_needed = min(
                        params.max_iterations,
                        int(math.ceil(math.log(1.0 - params.confidence) / denom)),
                    )

    if best_E is None or best_count < 8:
        raise NoConsensus("no essential matrix with at least 8 inliers")

    # Local refinement: refit on the consensus set and reclassify once.
    for _ in range(2):
        try:
            refined = essential_8point(p1[best_mask], p2[best_mask])
        except Degenerate:
            break
        err = angular_epipolar_error(refined, p1, p2, symmetric=True)
        mask = err < e_a
        if int(mask.sum()) < 8:
            break
        best_E = refined
        if np.array_equal(mask, best_mask):
            best_mask = mask
            break
        best_mask = mask

    return best_E, best_mask


def triangulate_batch(
    pose_a: Pose,
    pose_b: Pose,
    p_a: np.ndarray,
    p_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Linear two-ray triangulation of many correspondences at once.

    Stacks the ray-collinearity constraints [p]_x (R P + t) = 0 of both views
    and solves each 6x3 system in the least-squares sense.

    Returns (points (n, 3), tri_angles (n,), cheir_a (n,), cheir_b (n,)) where
    the cheirality flags report p . (R P + t) > 0 per view. Angles of
    unresolvable points are 0.
    """
    p_a = np.atleast_2d(np.asarray(p_a, dtype=np.float64))
    p_b = np.atleast_2d(np.asarray(p_b, dtype=np.float64))
    n = p_a.shape[0]

    A = np.empty((n, 6, 3))
    rhs = np.empty((n, 6))
    for pose, rays, sl in ((pose_a, p_a, slice(0, 3)), (pose_b, p_b, slice(3, 6))):
        K = _skew_batch(rays)
        A[:, sl, :] = K @ pose.R
        rhs[:, sl] = -(K @ pose.t)

    # Normal equations with a batched pseudo-inverse: rank-deficient systems
    # (parallel rays) yield some minimum-norm point that the angle and
    # cheirality checks below reject.
    AtA = np.einsum("nij,nik->njk", A, A)
    Atb = np.einsum("nij,ni->nj", A, rhs)
    points = np.einsum("nij,nj->ni", np.linalg.pinv(AtA), Atb)

    ca, cb = pose_a.center(), pose_b.center()
    da = points - ca
    db = points - cb
    cross = np.linalg.norm(np.cross(da, db), axis=1)
    dot = np.sum(da * db, axis=1)
    angles = np.arctan2(cross, dot)
    angles = np.where(np.isfinite(angles), angles, 0.0)

    cheir_a = np.sum(p_a * pose_a.transform(points), axis=1) > 0
    cheir_b = np.sum(p_b * pose_b.transform(points), axis=1) > 0
    return points, angles, cheir_a, cheir_b


def _skew_batch(v: np.ndarray) -> np.ndarray:
    n = v.shape[0]
    K = np.zeros((n, 3, 3))
    K[:, 0, 1] = -v[:, 2]
    K[:, 0, 2] = v[:, 1]
    K[:, 1, 0] = v[:, 2]
    K[:, 1, 2] = -v[:, 0]
    K[:, 2, 0] = -v[:, 1]
    K[:, 2, 1] = v[:, 0]
    return K


def triangulate(
    pose_a: Pose,
    pose_b: Pose,
    p_a: np.ndarray,
    p_b: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Triangulate one correspondence; returns (point, parallax angle).

    Raises NoParallax when the rays are (nearly) parallel or the poses share
    a center, and BehindRay when the point fails the spherical cheirality
    test in either view.
    """
    if np.linalg.norm(pose_a.center() - pose_b.center()) <= 1e-12:
        raise NoParallax("camera centers coincide")
    pts, angles, ca, cb = triangulate_batch(pose_a, pose_b, p_a, p_b)
    angle = float(angles[0])
    if angle < 1e-6:
        raise NoParallax(f"parallax angle {angle:.2e} rad below 1e-6")
    if not (ca[0] and cb[0]):
        raise BehindRay("triangulated point opposes an observed ray")
    return pts[0], angle


def decompose_essential(
    E: np.ndarray,
    p1: np.ndarray,
    p2: np.ndarray,
    inliers: np.ndarray | None = None,
) -> RelativePose:
    """Recover the relative pose from an essential matrix.

    Enumerates the four (R, +-t) decomposition candidates, triangulates the
    inlier correspondences under each, and keeps the candidate with the most
    points passing the spherical cheirality test in both views (ties broken
    by candidate index).

    Raises CheiralityFailure when every candidate scores zero.
    """
    p1 = np.atleast_2d(np.asarray(p1, dtype=np.float64))
    p2 = np.atleast_2d(np.asarray(p2, dtype=np.float64))
    if inliers is not None:
        p1 = p1[np.asarray(inliers)]
        p2 = p2[np.asarray(inliers)]
    if p1.shape[0] < 1:
        raise ValueError("need at least one inlier correspondence")

    U, _, Vt = np.linalg.svd(np.asarray(E, dtype=np.float64))
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    R1 = U @ W @ Vt
    R2 = U @ W.T @ Vt
    t = U[:, 2]

    pose_a = Pose.identity()
    best_idx = -1
    best_count = -1
    for idx, (R, tc) in enumerate([(R1, t), (R1, -t), (R2, t), (R2, -t)]):
        pose_b = Pose(R, tc)
        _, angles, ca, cb = triangulate_batch(pose_a, pose_b, p1, p2)
        count = int(np.sum(ca & cb & (angles > 1e-9)))
        if count > best_count:
            best_idx, best_count = idx, count

    if best_count <= 0:
        raise CheiralityFailure("no decomposition candidate passes cheirality")
    R, tc = [(R1, t), (R1, -t), (R2, t), (R2, -t)][best_idx]
    return RelativePose(R, tc)


def relative_from_poses(pose_a: Pose, pose_b: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation mapping camera-a coordinates into camera b."""
    R = pose_b.R @ pose_a.R.T
    t = pose_b.t - R @ pose_a.t
    return R, t


def essential_from_poses(pose_a: Pose, pose_b: Pose) -> np.ndarray:
    """Ground-truth essential matrix [t]_x R of a camera pair, normalized."""
    R, t = relative_from_poses(pose_a, pose_b)
    return project_to_essential(skew(t) @ R)
