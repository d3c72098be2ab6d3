# SPDX-License-Identifier: Apache-2.0
# Independent oracle for the linear-beta cumulative product, in 60-digit arithmetic.
# Prints alpha_bar[T] for the schedules frozen in test_schedule.cpp.
from mpmath import mp, mpf

mp.dps = 60


def alpha_bar_T(T, beta_start, beta_end):
    b0, b1 = mpf(beta_start), mpf(beta_end)
    prod = mpf(1)
    for i in range(T):
        beta = b0 if T == 1 else b0 + (b1 - b0) * i / (T - 1)
        prod *= 1 - beta
    return prod


for T, b0, b1 in [(1000, "1e-4", "0.02"), (100, "1e-4", "0.05")]:
    print(T, b0, b1, mp.nstr(alpha_bar_T(T, b0, b1), 25))
