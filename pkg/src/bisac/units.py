"""Unit conversions used at the configuration boundary.

Everything inside the package works in milliwatts and linear ratios.
"""

import numpy as np


def db_to_linear(x_db):
    return np.power(10.0, np.divide(x_db, 10.0))


def linear_to_db(x):
    return 10.0 * np.log10(x)


# dBm <-> mW is the same map with 1 mW as the reference.
dbm_to_mw = db_to_linear
mw_to_dbm = linear_to_db
