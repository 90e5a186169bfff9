import time
import numpy as np
from drbayes.mcmc import (GaussianTarget, SamplerConfig, run_chains, LogDensityTarget,
                          dirichlet_direct_sample, leapfrog)
from drbayes.mcmc.transforms import stick_forward, stick_inverse, stick_log_jacobian, stick_pullback, stick_grad_log_jacobian

# 1. leapfrog hand value
q, p = leapfrog((np.array([0.0]), np.array([1.0])), 0.1, lambda q: -q)
print("leapfrog:", q, p, "expect 0.1, 0.995")

# 2. 1-D normal moments
t0 = time.time()
tr = run_chains(GaussianTarget([0.0], [[1.0]]), SamplerConfig(draws=2500, tune=500, chains=4, seed=1))
x = tr.flat()[:, 0]
print(f"1D normal: mean={x.mean():+.4f} var={x.var():.4f} div={tr.divergent.sum()} "
      f"time={time.time()-t0:.2f}s")

# 3. 2-D rho=0.8
t0 = time.time()
tr = run_chains(GaussianTarget([0, 0], [[1, .8], [.8, 1]]), SamplerConfig(draws=2500, tune=500, chains=4, seed=2))
f = tr.flat()
print(f"2D normal: means={f.mean(0)} corr={np.corrcoef(f.T)[0,1]:.4f} div={tr.divergent.sum()} "
      f"time={time.time()-t0:.2f}s")

# 4. stick-breaking round trip
rng = np.random.default_rng(0)
y = rng.normal(size=(5, 4))
x, z, stick = stick_forward(y)
print("simplex sums:", x.sum(1), "roundtrip err:", np.abs(stick_inverse(x) - y).max())

# 5. Dirichlet rows target vs conjugate: quick NUTS check
class DirRows(LogDensityTarget):
    def __init__(self, a):
        self.a = np.asarray(a, float)
        self.rows, self.k = self.a.shape
        self.dim = self.rows * (self.k - 1)
        from drbayes.mcmc.transforms import Identity
        self.blocks = (Identity(self.dim),)
        self.param_names = None
    def logp_and_grad(self, yflat):
        y = yflat.reshape(self.rows, self.k - 1)
        x, zz, st = stick_forward(y)
        am1 = self.a - 1.0
        lp = float(np.sum(am1 * np.log(x))) + float(stick_log_jacobian(y, zz, st).sum())
        gx = am1 / x
        gy = stick_pullback(gx, x, zz, st) + stick_grad_log_jacobian(zz, self.k)
        return lp, gy.ravel()

alpha = np.array([[1.0, 2.0, 5.0], [3.0, 1.0, 1.0]])
t0 = time.time()
tgt = DirRows(alpha)
tr = run_chains(tgt, SamplerConfig(draws=5000, tune=1000, chains=4, seed=3))
draws = tr.flat().reshape(-1, 2, 2)
xs = np.stack([stick_forward(d)[0] for d in draws])  # slow but fine here
mcm = xs.mean(0)
exact = alpha / alpha.sum(1, keepdims=True)
print(f"dirichlet rows: max|mcmc-exact|={np.abs(mcm-exact).max():.5f} "
      f"div={tr.divergent.sum()} time={time.time()-t0:.2f}s depth_mean={tr.tree_depth.mean():.2f}")

# 6. timing estimate for acceptance criterion 1 scale: k=5, 17 rows stacked
alpha2 = rng.uniform(0.5, 5, size=(17, 5))
c2 = rng.integers(0, 100, size=(17, 5)).astype(float)
t0 = time.time()
tgt2 = DirRows(alpha2 + c2)
tr2 = run_chains(tgt2, SamplerConfig(draws=5000, tune=1000, chains=4, seed=4))
dt = time.time() - t0
draws2 = tr2.flat().reshape(-1, 17, 4)
# vectorized constrain
x2 = stick_forward(draws2.reshape(-1, 4))[0].reshape(-1, 17, 5)
mc2 = x2.mean(0)
ex2 = (alpha2 + c2) / (alpha2 + c2).sum(1, keepdims=True)
print(f"AC1-scale run (17x5): max|d|={np.abs(mc2-ex2).max():.5f} time={dt:.1f}s "
      f"depth={tr2.tree_depth.mean():.2f} div={tr2.divergent.sum()}")

# 7. dirichlet direct
d = dirichlet_direct_sample(np.array([1000.0, 1.0]), 50000, np.random.default_rng(5))
print("direct dirichlet mean:", d.mean(0), "expect ~", 1000/1001)
