"""
Gaussian and inverse-Gamma helpers shared by the samplers and the metrics.
Every covariance used by the model is a positive diagonal plus a low-rank
term, so densities are evaluated through the matrix determinant lemma and
the Woodbury identity instead of q×q factorizations.
"""

from typing import Optional, Tuple, Union

import numpy
from scipy import linalg

from factor_regression.errors import NumericalError

LOG_2PI = float(numpy.log(2.0 * numpy.pi))


def low_rank_gaussian_logpdf(
    residual: numpy.ndarray,
    psi: numpy.ndarray,
    loads: Optional[numpy.ndarray] = None,
    variances: Optional[numpy.ndarray] = None,
) -> Union[float, numpy.ndarray]:
    """
    Log-density of N(residual | 0, diag(psi) + loads diag(variances) loads^T).

    residual is a length-q vector or a q×M matrix of column residuals; the
    return value is a float or a length-M vector accordingly. loads is q×r
    and may have r = 0.
    """
    residual = numpy.asarray(residual, dtype=float)
    single = residual.ndim == 1
    columns = residual.reshape(residual.shape[0], -1)
    dim = columns.shape[0]
    scaled = columns / psi[:, None]
    quadratic = numpy.sum(columns * scaled, axis=0)
    log_det = float(numpy.sum(numpy.log(psi)))
    if loads is not None and loads.shape[1] == 1:
        # rank one: determinant lemma and Sherman-Morrison in closed form
        column = loads[:, 0]
        spread = float(variances[0])
        gain = float(numpy.sum(column * column / psi))
        projected = column @ scaled
        quadratic = quadratic - spread * projected * projected / (1.0 + spread * gain)
        log_det += float(numpy.log1p(spread * gain))
    elif loads is not None and loads.shape[1] > 1:
        rank = loads.shape[1]
        root = loads * numpy.sqrt(variances)[None, :]
        inner = numpy.eye(rank) + root.T @ (root / psi[:, None])
        try:
            chol = linalg.cholesky(inner, lower=True)
        except linalg.LinAlgError as err:
            raise NumericalError("Low-rank covariance is not positive definite") from err
        projected = linalg.solve_triangular(chol, root.T @ scaled, lower=True)
        quadratic = quadratic - numpy.sum(projected * projected, axis=0)
        log_det += 2.0 * float(numpy.sum(numpy.log(numpy.diag(chol))))
    values = -0.5 * (dim * LOG_2PI + log_det + quadratic)
    return float(values[0]) if single else values


def sample_from_precision(
    precision: numpy.ndarray, linear: numpy.ndarray, rng: numpy.random.Generator
) -> Tuple[numpy.ndarray, numpy.ndarray]:
    """
    Draw from N(precision^{-1} linear, precision^{-1}). Returns the draw and
    the mean.
    """
    try:
        chol = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError as err:
        raise NumericalError("Posterior precision is not positive definite") from err
    mean = linalg.cho_solve((chol, True), linear)
    noise = rng.standard_normal(mean.shape[0])
    return mean + linalg.solve_triangular(chol.T, noise, lower=False), mean


def sample_inverse_gamma(
    shape: Union[float, numpy.ndarray],
    rate: Union[float, numpy.ndarray],
    rng: numpy.random.Generator,
    size=None,
):
    """Inverse-Gamma draws under the shape/rate convention (mean rate/(shape-1))."""
    return 1.0 / rng.gamma(shape, 1.0 / numpy.asarray(rate, dtype=float), size=size)
