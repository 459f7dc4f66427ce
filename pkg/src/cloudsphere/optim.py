import numpy as np


class Adam:
    """Adaptive moment estimation over a single parameter array.

    ``mask`` (broadcastable to the parameter) freezes entries: frozen
    entries keep zero moments and are never moved.
    """

    def __init__(self, shape, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad, mask=None):
        """Update ``params`` in place."""
        if mask is not None:
            grad = grad * mask
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if mask is not None:
            update = update * mask
        params -= update
        return params
