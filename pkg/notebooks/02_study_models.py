# %% [markdown]
# # Rating models on the six study variants
#
# The bundled fixture holds the published gain and peak values of six
# vehicle variants. Values that were never published are filled in by a
# second-order reconstruction, and four model predictors are inferred from
# the ratings. Back-tests that rely on inferred values are not independent.

# %%
from collections import Counter

from rolldyn import predictor, ratestats, stepfit, study
from rolldyn.charvals import CATALOG

fixture = study.study_cvs()
liking = study.study_ratings("liking")
print(Counter(fixture["RV"].sources.values()))

# %% [markdown]
# ## Shipped models and their predictor bindings

# %%
models = predictor.builtin_models()
for m in models:
    print(m)

# %% [markdown]
# ## Back-test against the averaged liking ratings

# %%
bt = predictor.backtest(models, fixture, liking)
for c in bt.ranking():
    print(f"{c:>4}  RMSE sum {bt.rmse_sum[c]:.3f}   mean {bt.rmse_mean[c]:.3f}")

# %% [markdown]
# ## Rediscovering a model by stepwise regression
#
# Only the published values are offered as candidates.

# %%
variants = list(study.STUDY_VARIANTS)
keys = [k for k in CATALOG if fixture["RV"].sources[k] == "published"]
X = stepfit.design_matrix(fixture, variants, keys)
y = liking.matrix("liking", variants=variants, criteria=["RAH"])[:, 0]
res = stepfit.stepwise(X, y, keys=keys)
for step in res.steps:
    print(step)
print(predictor.model_from_fit("RAH", res, fixture))

# %% [markdown]
# ## Significance of the published correlations

# %%
for name in ("intensity", "liking", "cross"):
    rows, cols, r = study.published_correlation(name)
    cm = ratestats.CorrelationMatrix.from_coefficients(r, 7, rows, cols)
    print(name, cm.significant_pairs())
