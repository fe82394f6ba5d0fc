"""Loading, deflating and log-transforming annual price series."""
import io

import numpy as np

from commodstat import DatasetManifest, TimeSeries, deflate, load_csv, log_transform, difference

# A tiny nominal price file with a gap marker and a CPI column
raw = io.StringIO(
    "year,copper,cpi\n"
    "1899,..,9.5\n"
    "1900,12.0,10.0\n"
    "1901,13.5,10.4\n"
    "1902,12.9,10.9\n"
    "1903,14.1,11.3\n"
)
man = load_csv(raw)
print(man.names())
cu, cpi = man.series["copper"], man.series["cpi"]
print(cu.start_year, cu.end_year, cu.values)  # leading '..' dropped

real = deflate(cu, cpi, base_year=1900)
print(real.values)  # 1900 = 100
logp = log_transform(real)
print(np.round(logp.values, 4))
print(difference(logp).start_year)  # first difference starts a year later

# A manifest with a deflator does the same for every series at once
m2 = DatasetManifest({"copper": cu}, deflator=cpi, base_year=1900)
print(m2.real_log_prices().series["copper"].values.round(4))

# Windows and point lookups
print(logp.window(1901, 1902).values, logp.value_at(1903))
