# %% [markdown]
# # Latent factors in the residuals
#
# After removing the observed covariates, the residuals can still share
# common movements. Principal components of their Gram matrix recover
# those factors, and the ratio of neighbouring eigenvalues picks how many
# to keep.

# %%
import numpy as np

from fatmt import SimConfig, fit_intercepts, fit_latent, generate_dataset, gram_eigen, select_factor_count

config = SimConfig(n_units=500, n_periods=100, n_latent=3, seed=7)
panel, truth = generate_dataset(config, rep_index=0)
fit = fit_intercepts(panel)

spectrum = gram_eigen(fit.resid_after_x)
ratios = spectrum.eigenvalues[:8] / spectrum.eigenvalues[1:9]
print("leading eigenvalues", np.round(spectrum.eigenvalues[:6], 3))
print("ratios             ", np.round(ratios, 2))

r_hat = select_factor_count(spectrum)
print("selected factors:", r_hat, "(true:", config.n_latent, ")")

# %% [markdown]
# Scores and loadings are only identified up to a rotation, so we compare
# the fitted common component with the true one rather than the factors
# themselves.

# %%
latent = fit_latent(fit.resid_after_x, r_hat, spectrum)
true_common = truth.latent_scores @ truth.latent_loadings.T
corr = np.corrcoef(latent.common_component.ravel(), true_common.ravel())[0, 1]
print("correlation of common components:", round(corr, 4))
print("mean idiosyncratic variance:", round(latent.sigma_eta_diag.mean(), 3))
