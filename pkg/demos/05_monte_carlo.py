"""Reproducible critical values and a small size/power study."""
import tempfile

import numpy as np

from commodstat import (CvCache, ErrorComponentDGP, McConfig, kpss_from_residuals,
                        parse_spec, simulate_null_cv, simulate_test_cv, size_power_study)

spec = parse_spec("lin")
mc = McConfig(replications=1000, seed=42)

with tempfile.TemporaryDirectory() as d:
    cache = CvCache(d)
    cv = simulate_null_cv(spec, 100, mc=mc, cache=cache)
    print(cv.values)
    again = simulate_null_cv(spec, 100, mc=mc, cache=cache)  # read back from disk
    print(again.values == cv.values)

print(simulate_test_cv("expw", "linear", 100, McConfig(replications=500)).values)

# Size under iid noise, power against a random walk
def kpss_lin(y):
    s = np.arange(1, y.size + 1) / y.size
    e = y - np.polyval(np.polyfit(s, y, 1), s)
    return kpss_from_residuals(e, 0.5)

for label, dgp in (("size", ErrorComponentDGP(100)), ("power", ErrorComponentDGP(100, q=np.inf))):
    res = size_power_study(dgp, kpss_lin, trials=300, cv=cv)
    print(label, {k: round(v, 3) for k, v in res.frequency.items()})
