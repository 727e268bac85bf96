# %% [markdown]
# # Sporty to soft: predicted ratings of synthetic vehicles
#
# Five parameter presets run through the full pipeline. The models for
# roll impression, roll support and overall roll carry negative
# coefficients on the roll magnification factor, so their predictions
# should fall as the factor grows.

# %%
from rolldyn import charvals, predictor, spectra, synthlab
from rolldyn.charvals import CvKey

models = predictor.builtin_models()
rows = []
for name in synthlab.VALIDATION_PRESETS:
    run = synthlab.synth_run(synthlab.load_preset(name), synthlab.ChirpSpec(), variant_id=name)
    cvs = charvals.extract_all(spectra.roll_responses(run), variant_id=name)
    reports = predictor.predict_all(models, cvs)
    rows.append((name, cvs[CvKey("a_y", 0, "beta")], reports))

# %%
print(f"{'preset':>11} {'beta':>6} " + " ".join(f"{m.criterion:>6}" for m in models))
for name, b, reports in rows:
    print(f"{name:>11} {b:6.3f} " + " ".join(f"{r.value:6.2f}" for r in reports))

# %% [markdown]
# Predictions may leave the 1 to 10 scale when a vehicle lies outside the
# range the models were fitted on; the warnings say which predictor is out.

# %%
for name, _, reports in rows:
    n = sum(len(r.warnings) for r in reports)
    print(f"{name}: {n} extrapolation warning(s)")
