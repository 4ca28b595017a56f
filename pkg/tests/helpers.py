"""Shared test utilities: procedural scenes and gradient checking."""

import numpy as np


def textured_image(rng, size):
    """Mondrian-style random rectangles plus mild noise; rich local variance."""
    img = np.empty((size, size, 3))
    img[:] = rng.uniform(0.1, 0.9, 3)
    for _ in range(max(30, size // 2)):
        r0, c0 = rng.integers(0, size - 4, 2)
        r1 = r0 + int(rng.integers(4, size // 2))
        c1 = c0 + int(rng.integers(4, size // 2))
        img[r0 : min(r1, size), c0 : min(c1, size)] = rng.uniform(0.05, 0.95, 3)
    img += rng.normal(0.0, 0.03, img.shape)
    return np.clip(img, 0.0, 1.0)


def smooth_depth(rng, size):
    """Random tilted plane plus one Gaussian bump, shifted to start at 0."""
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    a, b = rng.uniform(-1.0, 1.0, 2)
    cy, cx = rng.uniform(0.2, 0.8, 2)
    depth = 0.5 + 0.5 * (a * yy + b * xx)
    depth += rng.uniform(0.3, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.18)
    return depth - depth.min()


def full_graph_gradient_check(net, patches, targets, n_samples, step=1e-4, rel_tol=1e-4, seed=0):
    """Compare backprop against central finite differences on random parameters.

    Parameter perturbations that flip any ReLU activation inside the
    difference window are resampled: the loss is not differentiable
    there, so a finite-difference quotient is meaningless.  Returns
    (checked, worst relative error, skipped).
    """
    out = net.forward(patches).copy()
    grad_out = 2.0 * (out - targets) / targets.size
    net.backward(grad_out)
    analytic = {
        (layer.name, attr): getattr(layer, "grad_" + attr).copy()
        for layer, attr in net.parameters()
    }

    def loss():
        delta = net.forward(patches) - targets
        return float(np.mean(delta**2))

    def activation_masks():
        return [relu._mask.copy() for relu in net.relus.values()]

    rng = np.random.default_rng(seed)
    params = net.parameters()
    checked = skipped = 0
    worst = 0.0
    while checked < n_samples:
        layer, attr = params[rng.integers(len(params))]
        values = getattr(layer, attr)
        index = np.unravel_index(rng.integers(values.size), values.shape)
        original = values[index]
        values[index] = original + step
        loss_plus = loss()
        masks_plus = activation_masks()
        values[index] = original - step
        loss_minus = loss()
        masks_minus = activation_masks()
        values[index] = original
        if any(not np.array_equal(a, b) for a, b in zip(masks_plus, masks_minus)):
            skipped += 1
            continue
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        exact = analytic[(layer.name, attr)][index]
        rel = abs(numeric - exact) / max(abs(numeric), abs(exact), 1e-8)
        worst = max(worst, rel)
        assert rel < rel_tol, (
            f"{layer.name}.{attr}{index}: finite difference {numeric:.10g} "
            f"vs analytic {exact:.10g} (rel {rel:.3e})"
        )
        checked += 1
    return checked, worst, skipped


def layer_gradient_check(layer, x, seed=0, step=1e-4, rel_tol=1e-4, check_input=True):
    """Exhaustive finite-difference check of one layer under a random quadratic loss.

    The loss 0.5 * sum((out - target)^2) is smooth, so every weight, bias,
    and (optionally) input component can be checked.
    """
    rng = np.random.default_rng(seed)
    target = rng.normal(size=layer.forward(x).shape)

    def loss():
        delta = layer.forward(x) - target
        return 0.5 * float(np.sum(delta**2))

    out = layer.forward(x)
    grad_in = np.array(layer.backward(out - target))
    grads = {"weight": layer.grad_weight.copy(), "bias": layer.grad_bias.copy()}

    worst = 0.0
    for attr in ("weight", "bias"):
        values = getattr(layer, attr)
        flat = values.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            lp = loss()
            flat[i] = original - step
            lm = loss()
            flat[i] = original
            numeric = (lp - lm) / (2.0 * step)
            exact = grads[attr].ravel()[i]
            rel = abs(numeric - exact) / max(abs(numeric), abs(exact), 1e-8)
            worst = max(worst, rel)
            assert rel < rel_tol, f"{attr}[{i}]: fd {numeric} vs analytic {exact}"
    if check_input:
        flat = x.ravel()
        gflat = grad_in.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            lp = loss()
            flat[i] = original - step
            lm = loss()
            flat[i] = original
            numeric = (lp - lm) / (2.0 * step)
            rel = abs(numeric - gflat[i]) / max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, rel)
            assert rel < rel_tol, f"input[{i}]: fd {numeric} vs analytic {gflat[i]}"
    return worst
