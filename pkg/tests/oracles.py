"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from mimest.neural import MlpClassifier, softmax_xent


def random_net(rng, n_in, n_out, width, depth, skip=True, slope=0.01):
    """A net with every parameter random (the library zeroes the head)."""
    net = MlpClassifier.init(n_in, n_out, width, depth, skip, slope, rng)
    net.set_params([rng.normal(scale=0.5, size=p.shape) for p in net.params()])
    return net


def numeric_grads(loss_fn, params, step=1e-5, pattern=None):
    """Central finite differences of ``loss_fn()`` w.r.t. each array in ``params`` (mutated in place, restored).

    ``pattern()``, if given, returns the activation pattern (signs of the
    pre-activations). The step is halved until both probes share the pattern
    at the base point, so no difference straddles a kink.
    """
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            h = step
            base = pattern() if pattern else None
            while True:
                p[i] = old + h
                up, s_up = loss_fn(), pattern() if pattern else None
                p[i] = old - h
                down, s_down = loss_fn(), pattern() if pattern else None
                p[i] = old
                if pattern is None or h < 1e-9 or (np.array_equal(s_up, base) and np.array_equal(s_down, base)):
                    break
                h /= 2
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_rel_error(analytic, numeric):
    """Largest per-tensor relative error ``|a - n| / max(|a| + |n|, 1e-6)`` (norm-wise)."""
    errs = []
    for a, n in zip(analytic, numeric):
        denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-6)
        errs.append(np.linalg.norm(a - n) / denom)
    return max(errs)


def xent_gradcheck(net, x, labels):
    params = net.params()

    def loss():
        return softmax_xent(net.forward(x), labels)[0]

    def pattern():
        return np.concatenate([(z > 0).ravel() for z in net.forward_cached(x)[1][1]] or [np.zeros(0, bool)])

    logits, cache = net.forward_cached(x)
    _, dlogits = softmax_xent(logits, labels)
    analytic = net.backward(cache, dlogits)
    return max_rel_error(analytic, numeric_grads(loss, params, pattern=pattern))


def gaussian_log_ratio(x, y, rho):
    """Exact log p(x,y) / p(x)p(y) for a standard bivariate Gaussian with correlation rho."""
    s = 1.0 - rho**2
    return -0.5 * np.log(s) - (rho**2 * (x**2 + y**2) - 2 * rho * x * y) / (2 * s)
