"""Modified Bessel function of the second kind for real order.

The evaluation follows the classical Temme / Steed scheme: the order is
split as ``nu = mu + n`` with ``|mu| <= 1/2``, ``K_mu`` and ``K_{mu+1}`` are
obtained from Temme's power series (``x < 2``) or from Steed's continued
fraction CF2 (``x >= 2``), and the forward recurrence, which is stable for
``K``, lifts the pair to order ``nu``.

Everything is vectorised over ``x`` for a scalar order, which is the access
pattern of kernel assembly.
"""

import math

import numpy as np

__all__ = ["bessel_k", "kv", "MAX_ORDER"]

MAX_ORDER = 50.0

_EPS = 1e-16
_MAXIT = 10000
_XCROSS = 2.0

# Taylor coefficients of 1/Gamma(z) about 0 (c[k] multiplies z**k).
_RGAMMA = (
    0.0,
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
)


def _gamma_terms(mu):
    """Return ``(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))`` for |mu| <= 1/2.

    ``gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)`` is summed from its
    series so that it stays accurate as ``mu -> 0``.
    """
    mu2 = mu * mu
    # 1/Gamma(1+mu) = sum_k c[k+1] mu**k; even k feed gam2, odd k feed -gam1
    gam2 = np.polyval(_RGAMMA[1::2][::-1], mu2)
    gam1 = -np.polyval(_RGAMMA[2::2][::-1], mu2)
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


def _temme(mu, x):
    """K_mu(x), K_{mu+1}(x) for |mu| <= 1/2 and 0 < x < 2 (power series)."""
    gam1, gam2, gampl, gammi = _gamma_terms(mu)
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    small = np.abs(e) < _EPS
    safe_e = np.where(small, 1.0, e)
    fact2 = np.where(small, 1.0, np.sinh(safe_e) / safe_e)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    ee = np.exp(e)
    p = 0.5 * ee / gampl
    q = 0.5 / (ee * gammi)
    total = ff.copy()
    total1 = p.copy()
    out = np.empty_like(x)
    out1 = np.empty_like(x)
    act = np.arange(x.size)
    c = np.ones_like(x)
    dd = x2 * x2
    mu2 = mu * mu
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu2)
        c = c * dd / i
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        done = np.abs(delta) < np.abs(total) * _EPS
        if done.any():
            out[act[done]] = total[done]
            out1[act[done]] = total1[done]
            keep = ~done
            act = act[keep]
            if not act.size:
                break
            ff, c, p, q, dd, total, total1 = (
                v[keep] for v in (ff, c, p, q, dd, total, total1)
            )
    else:
        raise ArithmeticError("Temme series for K_nu failed to converge")
    return out, out1 * 2.0 / x


def _steed(mu, x):
    """K_mu(x), K_{mu+1}(x) for |mu| <= 1/2 and x >= 2 (continued fraction CF2)."""
    mu2 = mu * mu
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25 - mu2
    q = np.full_like(x, a1)
    c = a1
    a = -a1
    s = 1.0 + q * delh
    h_out = np.empty_like(x)
    s_out = np.empty_like(x)
    act = np.arange(x.size)
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        done = np.abs(dels) < np.abs(s) * _EPS
        if done.any():
            h_out[act[done]] = h[done]
            s_out[act[done]] = s[done]
            keep = ~done
            act = act[keep]
            if not act.size:
                break
            b, d, h, delh, q1, q2, q, s = (
                v[keep] for v in (b, d, h, delh, q1, q2, q, s)
            )
    else:
        raise ArithmeticError("continued fraction for K_nu failed to converge")
    h = a1 * h_out
    kmu = np.sqrt(math.pi / (2.0 * x)) * np.exp(-x) / s_out
    kmu1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, kmu1


def kv(nu, x):
    """Array kernel behind :func:`bessel_k` with no domain checks on ``x``.

    Overflow for tiny ``x`` and large order surfaces as ``inf`` entries;
    callers decide how to treat them.
    """
    nu = abs(float(nu))
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.ravel()
    nl = int(nu + 0.5)
    mu = nu - nl
    kmu = np.empty_like(x)
    kmu1 = np.empty_like(x)
    lo = x < _XCROSS
    if lo.any():
        kmu[lo], kmu1[lo] = _temme(mu, x[lo])
    hi = ~lo
    if hi.any():
        kmu[hi], kmu1[hi] = _steed(mu, x[hi])
    if nl:
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(1, nl + 1):
                knext = (mu + i) * (2.0 / x) * kmu1 + kmu
                kmu, kmu1 = kmu1, knext
        # inf - inf style NaNs only arise once a term has already overflowed
        kmu = np.where(np.isnan(kmu), np.inf, kmu)
    return kmu.reshape(shape)


def bessel_k(nu, x):
    """Modified Bessel function of the second kind, ``K_nu(x)``.

    Parameters
    ----------
    nu : float
        Real order, ``|nu| <= 50``. ``K_{-nu} = K_nu``.
    x : float or array_like
        Strictly positive argument(s).

    Returns
    -------
    float or ndarray
        ``K_nu(x)``, with the shape of ``x``.

    Raises
    ------
    ValueError
        If ``x <= 0``, ``x`` is not finite, or the order is out of range.
    OverflowError
        If the result exceeds the double range (tiny ``x``, large order).
    """
    if not math.isfinite(nu) or abs(nu) > MAX_ORDER:
        raise ValueError(f"order {nu!r} outside supported range [-{MAX_ORDER}, {MAX_ORDER}]")
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("K_nu(x) requires finite x > 0")
    out = kv(nu, arr)
    if np.any(np.isinf(out)):
        raise OverflowError(f"K_{nu}(x) overflows double precision for some x")
    if np.ndim(x) == 0:
        return float(out)
    return out
