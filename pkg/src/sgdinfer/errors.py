"""Exception types raised by the package."""


class SgdInferError(Exception):
    pass


class NoAcceptedReplicasError(SgdInferError):
    """Every bootstrap replica was filtered out, so no interval can be formed."""


class DegenerateCovarianceError(SgdInferError):
    """The quadratic form ``a^T Sigma a`` is materially negative."""


class OracleUnavailableError(SgdInferError):
    """The Hessian at the target minimum is not positive definite."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NonConvergenceError(SgdInferError):
    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm
