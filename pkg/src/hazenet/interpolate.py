"""Edge-aware filling of sparsely estimated transmittance maps.

The filled map minimizes a quadratic made of a data term that pins
covered pixels to their aggregated estimates and a smoothness term that
penalizes differences between 4-neighbors, weighted by the inverse
squared color distance of the guide image (so smoothing is cheap inside
flat regions and expensive across strong edges).  The minimizer solves
``(S + lambda * L) t = S t_tilde`` with S the diagonal coverage mask and
L the weighted graph Laplacian; the solve is matrix-free Jacobi
preconditioned conjugate gradient.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_gray_map, check_rgb_image, check_same_shape


@dataclass(frozen=True)
class InterpolationConfig:
    lam: float = 1e-2
    eps_w: float = 1e-4
    cg_tol: float = 1e-8
    cg_max_iters: int = 10000

    def __post_init__(self):
        if self.lam <= 0 or self.eps_w <= 0 or self.cg_tol <= 0 or self.cg_max_iters <= 0:
            raise ValueError("all interpolation parameters must be positive")
        if self.cg_tol >= 1:
            raise ValueError("cg_tol must be < 1")


@dataclass
class SmoothnessWeights:
    """One positive weight per undirected 4-neighbor edge.

    right: (H, W-1) weights between each pixel and its right neighbor
    down:  (H-1, W) weights between each pixel and its lower neighbor
    """

    right: np.ndarray
    down: np.ndarray


class ConvergenceError(RuntimeError):
    """Conjugate gradient failed to reach the requested tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def build_weights(image, eps_w=1e-4):
    """Edge weights 1 / (squared RGB distance + eps_w) over the 4-neighborhood."""
    if eps_w <= 0:
        raise ValueError("eps_w must be positive")
    image = check_rgb_image(image)
    d_right = ((image[:, 1:, :] - image[:, :-1, :]) ** 2).sum(axis=2)
    d_down = ((image[1:, :, :] - image[:-1, :, :]) ** 2).sum(axis=2)
    return SmoothnessWeights(1.0 / (d_right + eps_w), 1.0 / (d_down + eps_w))


def apply_system(t, mask, weights, lam):
    """Matrix-free evaluation of ``(S + lambda * L) t``.

    The Laplacian term at pixel x is the sum of w(x, y) (t(x) - t(y))
    over the 4-neighbors y of x.
    """
    t = check_gray_map(t, "t")
    mask = check_gray_map(mask, "mask")
    check_same_shape(t, mask, "t", "mask")
    out = mask * t
    diff = t[:, :-1] - t[:, 1:]
    flux = weights.right * diff
    out[:, :-1] += lam * flux
    out[:, 1:] -= lam * flux
    diff = t[:-1, :] - t[1:, :]
    flux = weights.down * diff
    out[:-1, :] += lam * flux
    out[1:, :] -= lam * flux
    return out


def weight_degree(weights, height, width):
    """Sum of incident edge weights per pixel (the Laplacian diagonal)."""
    degree = np.zeros((height, width))
    degree[:, :-1] += weights.right
    degree[:, 1:] += weights.right
    degree[:-1, :] += weights.down
    degree[1:, :] += weights.down
    return degree


def dense_system(mask, weights, lam):
    """Assemble ``S + lambda * L`` as a dense (H*W, H*W) matrix.

    Intended for small instances: validation, eigenvalue checks, and
    direct solves that cross-check the matrix-free path.
    """
    height, width = mask.shape
    n = height * width
    system = np.zeros((n, n))
    system[np.arange(n), np.arange(n)] = mask.ravel()

    def couple(i, j, w):
        system[i, i] += lam * w
        system[j, j] += lam * w
        system[i, j] -= lam * w
        system[j, i] -= lam * w

    index = np.arange(n).reshape(height, width)
    for r in range(height):
        for c in range(width):
            if c + 1 < width:
                couple(index[r, c], index[r, c + 1], weights.right[r, c])
            if r + 1 < height:
                couple(index[r, c], index[r + 1, c], weights.down[r, c])
    return system


def solve_interpolation(sparse, image, config=None):
    """Fill a sparse transmittance estimate guided by the hazy image.

    Starts CG from the masked mean and stops when the relative residual
    drops below ``cg_tol``; raises ConvergenceError (with the achieved
    residual) if the iteration cap is hit first.  The solution is clamped
    to [0, 1] at the end.
    """
    if config is None:
        config = InterpolationConfig()
    image = check_rgb_image(image)
    t_tilde = check_gray_map(sparse.t_tilde, "t_tilde")
    mask = check_gray_map(sparse.mask, "mask")
    check_same_shape(t_tilde, image, "t_tilde", "image")
    check_same_shape(mask, image, "mask", "image")
    covered = mask > 0
    if not covered.any():
        raise ValueError("sparse estimate has an empty mask")

    weights = build_weights(image, config.eps_w)
    rhs = mask * t_tilde
    x = np.full(mask.shape, t_tilde[covered].mean())
    solution = _preconditioned_cg(x, rhs, mask, weights, config)
    return np.clip(solution, 0.0, 1.0)


def _preconditioned_cg(x, rhs, mask, weights, config):
    height, width = mask.shape
    diagonal = mask + config.lam * weight_degree(weights, height, width)
    # pixels with no data term and (in degenerate 1x1 images) no edges
    diagonal = np.maximum(diagonal, np.finfo(np.float64).tiny)

    rhs_norm = float(np.sqrt(np.sum(rhs * rhs)))
    scale = rhs_norm if rhs_norm > 0 else 1.0
    residual = rhs - apply_system(x, mask, weights, config.lam)
    res_norm = float(np.sqrt(np.sum(residual * residual)))
    if res_norm / scale <= config.cg_tol:
        return x
    z = residual / diagonal
    direction = z.copy()
    rz = float(np.sum(residual * z))
    for iteration in range(1, config.cg_max_iters + 1):
        a_dir = apply_system(direction, mask, weights, config.lam)
        alpha = rz / float(np.sum(direction * a_dir))
        x = x + alpha * direction
        residual = residual - alpha * a_dir
        res_norm = float(np.sqrt(np.sum(residual * residual)))
        if res_norm / scale <= config.cg_tol:
            return x
        z = residual / diagonal
        rz_next = float(np.sum(residual * z))
        direction = z + (rz_next / rz) * direction
        rz = rz_next
    raise ConvergenceError(
        f"conjugate gradient did not reach tolerance {config.cg_tol:g} within "
        f"{config.cg_max_iters} iterations (relative residual {res_norm / scale:.3e})",
        residual=res_norm / scale,
        iterations=config.cg_max_iters,
    )
