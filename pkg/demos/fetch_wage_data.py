"""Materialize the wage dataset as data/wage2.csv.

The data come from the National Longitudinal Survey of Young Men as
distributed in the `wooldridge` packages (R and Python; dataset name
"wage2"; 935 rows).  This script needs the Python package:

    pip install wooldridge
    python demos/fetch_wage_data.py

Only the four columns the analysis uses are written: wage (monthly
earnings), educ (years of education), meduc (mother's education, the
instrument; has missing values), IQ.
"""

import os
import sys

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "wage2.csv")

try:
    import wooldridge
except ImportError:
    print("the `wooldridge` package is not installed; run: pip install wooldridge")
    sys.exit(1)

df = wooldridge.data("wage2")[["wage", "educ", "meduc", "IQ"]]
os.makedirs(os.path.dirname(OUT), exist_ok=True)
df.to_csv(OUT, index=False)
print(f"wrote {len(df)} rows to {OUT} "
      f"({int(df['meduc'].isna().sum())} rows have missing meduc)")
