#pragma once

namespace pln {

// Inverse CDF of the standard normal (Wichura's AS241 rational
// approximation, double-precision variant). Accurate to ~1e-15 for
// p in (0, 1); throws ParameterDomainError outside.
double normal_quantile(double p);

// CDF of the standard normal, via erfc.
double normal_cdf(double x);

// Kolmogorov limiting distribution Q(lambda) = 2 sum_{k>=1} (-1)^{k-1}
// exp(-2 k^2 lambda^2), the asymptotic p-value of the KS statistic.
// Series truncated once a term drops below 1e-12; result clamped to [0,1].
double kolmogorov_q(double lambda);

// log(y!) through lgamma; y must be a nonnegative integer value.
double log_factorial(double y);

}  // namespace pln
