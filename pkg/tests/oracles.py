"""Independent reference implementations used to check the package.

Everything here is deliberately written with explicit loops and float64
arithmetic, sharing no code with the package internals.
"""

import numpy as np


def naive_steering_vector(theta_deg, m, spacing):
    a = np.empty(m, dtype=complex)
    for i in range(m):
        a[i] = np.exp(-1j * 2.0 * np.pi * spacing * i * np.sin(np.deg2rad(theta_deg)))
    return a


def naive_music_spectrum(r, num_sources, grid_angles, spacing):
    """Loop evaluation of the reciprocal noise-subspace projection power."""
    m = r.shape[0]
    evals, evecs = np.linalg.eigh(r)
    un = evecs[:, : m - num_sources]  # ascending order: smallest eigenvalues first
    c = un @ un.conj().T
    out = np.empty(len(grid_angles))
    for gi, theta in enumerate(grid_angles):
        a = naive_steering_vector(theta, m, spacing)
        acc = 0.0 + 0.0j
        for i in range(m):
            for j in range(m):
                acc += np.conj(a[i]) * c[i, j] * a[j]
        out[gi] = 1.0 / max(acc.real, 1e-18)
    return out


def naive_conv2d(x, kernel, bias):
    n, h, w, cin = x.shape
    k, _, _, cout = kernel.shape
    oh, ow = h - k + 1, w - k + 1
    out = np.zeros((n, oh, ow, cout))
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                for co in range(cout):
                    acc = 0.0
                    for di in range(k):
                        for dj in range(k):
                            for ci in range(cin):
                                acc += float(kernel[di, dj, ci, co]) * float(x[b, i + di, j + dj, ci])
                    out[b, i, j, co] = acc + float(bias[co])
    return out


def naive_fc(x, weight, bias):
    n = x.shape[0]
    flat = x.reshape(n, -1)
    cx, cy = weight.shape
    out = np.zeros((n, cy))
    for b in range(n):
        for j in range(cy):
            acc = 0.0
            for i in range(cx):
                acc += float(flat[b, i]) * float(weight[i, j])
            out[b, j] = acc + float(bias[j])
    return out


def naive_batchnorm_train(x, scale, shift, eps=1e-5):
    channels = x.shape[-1]
    flat = x.reshape(-1, channels).astype(np.float64)
    out = np.empty_like(flat)
    for c in range(channels):
        col = flat[:, c]
        mean = col.mean()
        var = col.var()
        out[:, c] = (col - mean) / np.sqrt(var + eps) * float(scale[c]) + float(shift[c])
    return out.reshape(x.shape)


def naive_softmax(x):
    rows = np.atleast_2d(x.astype(np.float64))
    out = np.empty_like(rows)
    for i, row in enumerate(rows):
        shifted = row - row.max()
        e = np.exp(shifted)
        out[i] = e / e.sum()
    return out.reshape(np.atleast_2d(x).shape) if x.ndim > 1 else out[0]


def relative_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def numeric_gradient(f, arrays, step=1e-3):
    """Central-difference gradients of scalar f() w.r.t. each array, in place."""
    grads = []
    for arr in arrays:
        g = np.zeros(arr.shape, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f()
            flat[i] = orig - step
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def fisher_information_crb(doas_deg, gamma, noise_var, m, spacing, num_snapshots):
    """DOA bounds from the full finite-difference Fisher information matrix.

    Parametrizes (DOAs in radians, all real parameters of the signal
    covariance, the noise variance), differentiates the model covariance
    numerically, assembles the Gaussian Fisher information, inverts it, and
    returns the DOA-block standard deviations in degrees.
    """
    doas = np.asarray(doas_deg, dtype=float)
    k = doas.size

    def build_cov(params):
        th = params[:k]
        g = np.zeros((k, k), dtype=complex)
        idx = k
        for i in range(k):
            g[i, i] = params[idx]
            idx += 1
        for i in range(k):
            for j in range(i + 1, k):
                g[i, j] = params[idx] + 1j * params[idx + 1]
                g[j, i] = params[idx] - 1j * params[idx + 1]
                idx += 2
        noise = params[idx]
        a = np.stack(
            [naive_steering_vector(np.rad2deg(t), m, spacing) for t in th], axis=1
        )
        return a @ g @ a.conj().T + noise * np.eye(m)

    params = list(np.deg2rad(doas))
    params += [float(np.real(gamma[i, i])) for i in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            params += [float(np.real(gamma[i, j])), float(np.imag(gamma[i, j]))]
    params.append(float(noise_var))
    params = np.array(params)

    n = params.size
    base = build_cov(params)
    inv = np.linalg.inv(base)
    derivs = []
    for i in range(n):
        h = 1e-6 * max(1.0, abs(params[i]))
        up = params.copy()
        up[i] += h
        down = params.copy()
        down[i] -= h
        derivs.append((build_cov(up) - build_cov(down)) / (2.0 * h))

    fim = np.zeros((n, n))
    for i in range(n):
        left = inv @ derivs[i]
        for j in range(i, n):
            fim[i, j] = num_snapshots * np.real(np.trace(left @ inv @ derivs[j]))
            fim[j, i] = fim[i, j]
    crb = np.linalg.inv(fim)
    return np.sqrt(np.diag(crb)[:k]) * 180.0 / np.pi
