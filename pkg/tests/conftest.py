import numpy as np


def numeric_grads(net, x, y, seed, extra=None, h=1e-5):
    """Central differences of the (batch loss + penalty) with noise frozen by ``seed``."""

    def f():
        loss, _ = net.loss_and_grads(x, y, np.random.default_rng(seed))
        return loss + (extra(net)[0] if extra else 0.0)

    out = []
    for p in net.params():
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + h
            fp = f()
            p[i] = orig - h
            fm = f()
            p[i] = orig
            num[i] = (fp - fm) / (2 * h)
        out.append(num)
    return out


def analytic_grads(net, x, y, seed, extra=None):
    _, grads = net.loss_and_grads(x, y, np.random.default_rng(seed))
    grads = [g.copy() for g in grads]
    if extra:
        grads = [g + e for g, e in zip(grads, extra(net)[1])]
    return grads


def max_rel_grad_error(net, x, y, seed=0, extra=None):
    """Worst over parameter arrays of max|analytic - numeric| / max|analytic|."""
    ana = analytic_grads(net, x, y, seed, extra)
    num = numeric_grads(net, x, y, seed, extra)
    errs = [np.max(np.abs(a - n)) / max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-300)
            for a, n in zip(ana, num)]
    return max(errs)
