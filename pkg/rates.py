# rates.py
# Rate calculus: c·n^{-α}(log n)^{β} descriptors, regimes, bandwidth rules.
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import total_ordering

from helper_functions import UnsupportedError, ValidationError, require


# --- Domain Types ---
@total_ordering
@dataclass(frozen=True)
class Rate:
    """
    c·n^{-alpha}(log n)^{beta}. Ordered by asymptotic size: r1 < r2 when r1
    vanishes faster, i.e. larger alpha, or equal alpha and smaller beta.
    """
    alpha: Fraction
    beta: Fraction = Fraction(0)
    c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'alpha', Fraction(self.alpha))
        object.__setattr__(self, 'beta', Fraction(self.beta))
        require(self.c > 0, f"rate constant must be > 0, got {self.c}")

    def _key(self):
        return (-self.alpha, self.beta)

    def __lt__(self, other):
        if not isinstance(other, Rate):
            return NotImplemented
        return self._key() < other._key()

    def __eq__(self, other):
        if not isinstance(other, Rate):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def dominates(self, other):
        """ True when self is asymptotically smaller than other. """
        return self < other

    def value(self, n):
        return self.c * n ** (-float(self.alpha)) * math.log(n) ** float(self.beta)

    def describe(self):
        text = f"n^(-{self.alpha})"
        if self.beta:
            text += f" (log n)^({self.beta})"
        return text


class Regime(Enum):
    LOW = 'low-dim'
    MID = 'mid-dim'
    HIGH = 'high-dim'

    @staticmethod
    def thresholds(p):
        return (p + 2, 3 * p)


def slowest(*rates):
    return max(rates)


# --- Regimes and second-stage rates ---
def _check_dp(d, p):
    require(d >= 2, f"dimension must be >= 2, got d={d}")
    require(p >= 2 and p % 2 == 0, f"kernel order must be an even integer >= 2, got p={p}")


def classify_regime(d, p=2):
    _check_dp(d, p)
    low, high = Regime.thresholds(p)
    if d < low:
        return Regime.LOW
    if d < high:
        return Regime.MID
    return Regime.HIGH


def theoretical_rate(d, p=2):
    regime = classify_regime(d, p)
    if regime is Regime.LOW:
        return Rate(Fraction(p, 2 * p + 1)), regime
    if regime is Regime.MID:
        return Rate(Fraction(2 * p, 3 * p + d), Fraction(1, 3)), regime
    return Rate(Fraction(p, d), Fraction(2 * p, d)), regime


def bandwidth_exponent(d, p=2):
    """ (γ, λ) with the rate-optimal bandwidth b = n^{-γ}(log n)^{λ}. """
    regime = classify_regime(d, p)
    if regime is Regime.LOW:
        return Fraction(1, 2 * p + 1), Fraction(0)
    if regime is Regime.MID:
        return Fraction(2, 3 * p + d), Fraction(0)
    return Fraction(1, d), Fraction(2, d)


def optimal_bandwidth(d, n, p=2):
    require(n >= 2, f"n must be >= 2, got {n}")
    if p != 2:
        raise UnsupportedError(f"bandwidth rule is only implemented for p=2 (got p={p}); "
                               "the rate exponent is still available from theoretical_rate")
    gamma_b, log_power = bandwidth_exponent(d, p)
    return float(n ** (-float(gamma_b)) * math.log(n) ** float(log_power))


def tsms_rate_for_bandwidth(d, gamma_b, log_power=0, p=2):
    """ Slowest of b^p, (nb)^{-1/2} and (n²b^d/log n)^{-1/3} for b = n^{-γ}(log n)^{λ}. """
    _check_dp(d, p)
    g, lam = Fraction(gamma_b), Fraction(log_power)
    bias = Rate(p * g, p * lam) if p * g > 0 else None
    variance = Rate((1 - g) / 2, -lam / 2)
    boundary = Rate((2 - d * g) / 3, (1 - d * lam) / 3)
    terms = [r for r in (bias, variance, boundary) if r is not None]
    require(bias is not None and all(r.alpha >= 0 for r in terms),
            f"bandwidth exponent γ={g} does not give a vanishing rate in d={d}")
    return slowest(*terms)


# --- First stage ---
def _vanishes(rate):
    return rate.alpha > 0 or (rate.alpha == 0 and rate.beta < 0)


def first_stage_rate(d, gamma_b, log_power=0):
    """ a_n = (n b^d / log n)^{-1/2} + b² for b = n^{-γ}(log n)^{λ}. """
    require(d >= 1, f"dimension must be >= 1, got d={d}")
    g, lam = Fraction(gamma_b), Fraction(log_power)
    variance = Rate((1 - d * g) / 2, (1 - d * lam) / 2)
    bias = Rate(2 * g, 2 * lam)
    if not (_vanishes(variance) and _vanishes(bias)):
        raise ValidationError(f"bandwidth exponent γ={g}, log power {lam} gives an inconsistent first stage "
                              f"in d={d} (a_n does not vanish)")
    return slowest(variance, bias)


def first_stage_optimal_bandwidth(d, n):
    require(n >= 2, f"n must be >= 2, got {n}")
    return float(n ** (-1.0 / (d + 4)))


def first_stage_optimal_rate(d):
    return Rate(Fraction(2, d + 4), Fraction(1, 2))


def combine_rates(a_n, u_n, v_n):
    """ max{n^{-1/3} a_n^{2/3}, u_n, v_n} in the rate order. """
    first = Rate(Fraction(1, 3) + Fraction(2, 3) * a_n.alpha, Fraction(2, 3) * a_n.beta)
    return slowest(first, u_n, v_n)


def regime_table(d, p, n):
    """ Everything the `rates` command reports for one (d, p, n). """
    rate, regime = theoretical_rate(d, p)
    gamma_b, log_power = bandwidth_exponent(d, p)
    table = {
        'd': d, 'p': p, 'n': n,
        'regime': regime.value,
        'thresholds': list(Regime.thresholds(p)),
        'alpha': str(rate.alpha),
        'beta': str(rate.beta),
        'rate': rate.describe(),
        'bandwidth_exponent': str(gamma_b),
        'bandwidth_log_power': str(log_power),
        'bandwidth': optimal_bandwidth(d, n, p) if p == 2 else None,
        'first_stage_bandwidth': first_stage_optimal_bandwidth(d, n),
        'first_stage_rate': first_stage_optimal_rate(d).describe(),
    }
    if p == 2:
        table['first_stage_rate_at_bandwidth'] = first_stage_rate(d, gamma_b, log_power).describe()
    return table
