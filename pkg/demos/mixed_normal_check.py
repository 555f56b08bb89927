"""Cross-validate the mixed-normal law of the rescaled filter error.

Across independent observation paths the sqrt(n)-rescaled error of the
coarse particle filter should look like sqrt(V) * xi with xi standard
normal and V a path-dependent conditional variance.  The library offers
an independent per-path estimate of V built from the tangent flow of the
Euler scheme.  Two consistency checks follow:

  1. the empirical variance of the rescaled errors should match the mean
     of the per-path variance estimates;
  2. dividing each error by the square root of its own variance estimate
     should produce standard normal samples, which a KS test can judge.

Run:  python3 demos/mixed_normal_check.py          (a few minutes)
"""

import numpy as np

from filterlab import (SampleSet, SchemeTag, get_model, get_test_function,
                       ks_test, path_sample, sample_lattice,
                       standard_normal_cdf, standardize_mixed_normal)

N_FINE = 2048
LEVEL = 256
PARTICLES = 2000
PATHS = 200
SEED = 17


def main():
    model = get_model("coupled")
    g = get_test_function("tanh")
    print(f"model: {model.name}, n={LEVEL}, n_fine={N_FINE}, "
          f"M={PARTICLES}, paths={PATHS}")
    results = []
    for p in range(PATHS):
        lat = sample_lattice(model.e, model.d, N_FINE, SEED, p)
        results.append(path_sample(model, lat, g, SchemeTag.SCHEME_I,
                                   LEVEL, PARTICLES, SEED))
        if (p + 1) % 50 == 0:
            print(f"  {p + 1} paths done")

    err = np.array([r.rescaled_error for r in results])
    v_hat = np.array([r.V_hat for r in results])
    v_eff = np.array([r.V_eff for r in results])

    emp = float(err.var(ddof=1))
    print(f"\nempirical variance of rescaled errors: {emp:.5f}")
    print(f"mean per-path variance estimate:       {v_hat.mean():.5f}")
    print(f"ratio: {emp / v_hat.mean():.3f}  (1 means the variance "
          "functional explains the error spread)")

    z, excluded = standardize_mixed_normal(SampleSet(err, label="z"), v_eff)
    stat, p_value = ks_test(z, standard_normal_cdf)
    print(f"\nstandardized samples: mean {z.values.mean():+.4f}, "
          f"variance {z.values.var(ddof=1):.4f}, excluded {excluded}")
    print(f"KS against N(0,1): statistic {stat:.4f}, p-value {p_value:.4f}")
    print("a p-value above 0.01 is consistent with the mixed-normal limit")


if __name__ == "__main__":
    main()
