import numpy as np
from scipy.special import betainc


def student_t_two_sided_p(t, dof):
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom.

    Uses the identity P = I_x(dof/2, 1/2) with x = dof / (dof + t^2), where I is
    the regularized incomplete beta function.
    """
    t = np.asarray(t, dtype=float)
    dof = float(dof)
    if dof <= 0:
        raise ValueError("dof must be > 0")
    with np.errstate(over="ignore"):
        x = dof / (dof + t * t)
    p = betainc(0.5 * dof, 0.5, x)
    return np.clip(p, 0.0, 1.0)
