"""End-to-end acceptance criteria, one test per criterion.

Each test checks its stated tolerance and its runtime budget. The terminal
summary prints one PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

from conftest import DATA, random_spd
from oracles import ms_ssim_direct, npy_bytes_handwritten, pvar_loops, sample_var
from fidtrust import npyformat
from fidtrust.augment import noise_augment
from fidtrust.cli import main
from fidtrust.experiments import ExperimentConfig, run_experiment
from fidtrust.image_metrics import ImageTensor, mae, ms_ssim
from fidtrust.linalg import GaussianSummary, frechet_gaussian, sqrtm_psd
from fidtrust.metrics import FidDistribution, fid_stats, pvar, vfid_decomposition
from fidtrust.synthetic import SyntheticSpec, make_image

SEEDS = range(10)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        print(f"elapsed {self.elapsed:.2f} s (budget {self.seconds} s)")

    def check(self):
        assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


def summary(mean, var):
    return GaussianSummary(np.atleast_1d(mean), np.atleast_2d(np.diag(np.atleast_1d(var))), 10)


@pytest.mark.acceptance(1, "closed-form Frechet distance for 1-D and diagonal Gaussians")
def test_closed_form_frechet():
    rng = np.random.default_rng(1)
    with Budget(5) as b:
        for _ in range(200):
            m1, m2 = rng.normal(0, 3, 2)
            s1, s2 = rng.uniform(0.1, 4, 2)
            expected = (m1 - m2) ** 2 + (s1 - s2) ** 2
            got = frechet_gaussian(summary(m1, s1 ** 2), summary(m2, s2 ** 2))
            assert abs(got - expected) <= 1e-10 * expected
        for _ in range(200):
            m1, m2 = rng.normal(0, 1, (2, 16))
            l1, l2 = rng.uniform(0.01, 5, (2, 16))
            expected = np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(l1) - np.sqrt(l2)) ** 2)
            got = frechet_gaussian(summary(m1, l1), summary(m2, l2))
            assert abs(got - expected) <= 1e-8 * expected
    b.check()


@pytest.mark.acceptance(2, "matrix square root reconstructs SPD matrices up to condition 1e8")
def test_sqrtm_reconstruction():
    rng = np.random.default_rng(2)
    worst = 0.0
    with Budget(30) as b:
        for i in range(100):
            k = (8, 64, 256)[i % 3]
            cond = 10 ** rng.uniform(0, 8) if i >= 9 else 1e8
            a = random_spd(rng, k, cond)
            r = sqrtm_psd(a)
            err = np.linalg.norm(r @ r - a) / np.linalg.norm(a)
            worst = max(worst, err)
    print(f"worst relative Frobenius error {worst:.2e}")
    assert worst <= 1e-6
    b.check()


@pytest.mark.acceptance(3, "vFID decomposition reconstructs Var(a + b - 2c)")
def test_decomposition_identity():
    rng = np.random.default_rng(3)
    with Budget(5) as b:
        for _ in range(1000):
            scale = 10 ** rng.uniform(-3, 3)
            a = rng.uniform(0, 1, 20) * scale
            bb = rng.uniform(2, 3, 20) * scale
            c = rng.uniform(0.1, 0.9, 20) * scale
            values = a + bb - 2 * c
            mean, var, std = fid_stats(values)
            dec = vfid_decomposition(FidDistribution(values, mean, var, std, a, bb, c))
            expected = sample_var(list(values))
            assert abs(dec.reconstructed_vfid - expected) <= 1e-8 * expected
            assert abs(dec.residual) <= 1e-8 * max(var, 1e-30)
    b.check()


@pytest.mark.acceptance(4, "pVar equals a brute-force double loop")
def test_pvar_oracle():
    rng = np.random.default_rng(4)
    with Budget(5) as b:
        for _ in range(100):
            n_img, n_pass, dim = rng.integers(1, 17), rng.integers(2, 21), rng.integers(1, 33)
            x = rng.standard_normal((n_img, n_pass, dim)) * rng.uniform(0.1, 3)
            assert abs(pvar(x) - pvar_loops(x)) <= 1e-12
    b.check()


def desk_config(experiment, seed, **kw):
    return ExperimentConfig(experiment=experiment, master_seed=seed, n_per_half=256, n_passes=20,
                            validators=False, **kw)


@pytest.mark.acceptance(5, "equal augmentation: FID and sigma-FID fall from strength 5 to 100")
def test_equal_augmentation_trend():
    hits_fid = hits_sigma = 0
    with Budget(120) as b:
        for seed in SEEDS:
            table, _ = run_experiment(desk_config("equal-aug", seed, strengths=(5, 20, 50, 100)))
            fid, sigma = table.column("fid"), table.column("sigma_fid")
            hits_fid += fid[-1] < fid[0]
            hits_sigma += sigma[-1] < sigma[0]
            print(f"seed {seed}: fid {fid[0]:.4g} -> {fid[-1]:.4g}, sigma {sigma[0]:.4g} -> {sigma[-1]:.4g}")
    print(f"FID trend {hits_fid}/10, sigma-FID trend {hits_sigma}/10")
    assert hits_fid >= 9 and hits_sigma >= 9
    b.check()


@pytest.mark.acceptance(6, "OOD ordering: kNN strictly increasing, sigma-FID non-decreasing with shift")
def test_ood_ordering():
    knn_hits = sigma_hits = 0
    with Budget(120) as b:
        for seed in SEEDS:
            cfg = desk_config("ood-table", seed, test_sets=("shift:0.1", "shift:0.25", "shift:0.5"))
            table, _ = run_experiment(cfg)
            knn, sigma = table.column("knn"), table.column("sigma_fid")
            knn_hits += all(x < y for x, y in zip(knn, knn[1:]))
            sigma_hits += all(x <= y for x, y in zip(sigma, sigma[1:]))
            print(f"seed {seed}: knn {[round(v, 4) for v in knn]}, sigma {[round(v, 4) for v in sigma]}")
    print(f"kNN ordered {knn_hits}/10, sigma-FID ordered {sigma_hits}/10")
    assert knn_hits == 10 and sigma_hits >= 8
    b.check()


@pytest.mark.acceptance(7, "fixed test set: pVar constant across reference strengths")
def test_fixed_test_pvar_constant():
    with Budget(60) as b:
        table, _ = run_experiment(desk_config("fixed-test", 7))
    pv = table.column("pvar")
    print(f"{len(pv)} strengths, pVar spread {max(pv) - min(pv):.3e}")
    assert len(pv) >= 2 and max(pv) - min(pv) <= 1e-12
    b.check()


@pytest.mark.acceptance(8, "MS-SSIM and MAE validators")
def test_validators():
    rng = np.random.default_rng(8)
    with Budget(30) as b:
        for _ in range(20):
            a = ImageTensor(rng.random((176, 176, 3)))
            assert abs(ms_ssim(a, a) - 1.0) <= 1e-9
        worst = 0.0
        for i in range(20):
            shape = (176, 176, 3) if i % 2 else (176, 192, 1)
            a = make_image(SyntheticSpec("mixed"), i, seed=8, size=shape)
            noisy = noise_augment(a, float(rng.uniform(1, 40)), seed=i)
            worst = max(worst, abs(ms_ssim(a, noisy) - ms_ssim_direct(a.pixels, noisy.pixels, a.span)))
        print(f"worst MS-SSIM deviation from direct definition {worst:.2e}")
        assert worst <= 1e-6
        for _ in range(100):
            x, y, z = (ImageTensor(rng.normal(size=(8, 8, 3)) * 10) for _ in range(3))
            assert mae(x, x) == 0.0 and mae(x, y) >= 0
            assert abs(mae(x, y) - mae(y, x)) <= 1e-12
            assert mae(x, z) <= mae(x, y) + mae(y, z) + 1e-12
    b.check()


EXPERIMENT_RUNS = {
    "equal-aug": ["--strengths", "0,20,100"],
    "ood-table": ["--test-sets", "self,holdout,noise:5,overlay:textures,shift:0.25"],
    "sensitivity": ["--strengths", "0,5,40", "--charts", "fid,sigma_fid,pvar,mae,ms_ssim"],
    "fixed-test": ["--strengths", "0,10,100", "--format", "json"],
}


@pytest.mark.acceptance(9, "experiment CLI reruns are byte-identical")
def test_cli_determinism(tmp_path, capsys):
    with Budget(120) as b:
        for name, extra in EXPERIMENT_RUNS.items():
            snapshots = []
            for attempt in ("first", "second"):
                out = tmp_path / name / attempt
                argv = ["experiment", name, "--seed", "2024", "--out", str(out), "--n-per-half", "96",
                        "--J", "5", "--keep-latents", *extra]
                assert main(argv) == 0
                snapshots.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
            names = sorted(str(p) for p in snapshots[0])
            assert any(n.endswith(".svg") for n in names) and "manifest.json" in names
            assert snapshots[0] == snapshots[1], name
            print(f"{name}: {len(names)} files identical")
    capsys.readouterr()
    b.check()


@pytest.mark.acceptance(10, ".npy round trip and independently written fixtures")
def test_format_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    with Budget(10) as b:
        for i in range(50):
            rank = 2 + i % 2
            dtype = ("<f4", "<f8")[(i // 2) % 2]
            shape = tuple(int(v) for v in rng.integers(1, 12, rank))
            arr = (rng.standard_normal(shape) * 10 ** rng.uniform(-5, 5)).astype(dtype)
            path = tmp_path / f"{i}.npy"
            npyformat.save(path, arr)
            back = npyformat.load(path)
            assert back.dtype == arr.dtype and back.shape == arr.shape
            assert back.tobytes() == arr.tobytes()
        f4 = npyformat.load(DATA / "numpy_written_f4.npy")
        assert f4.tobytes() == (np.arange(24, dtype="<f4").reshape(2, 3, 4) / np.float32(7)).tobytes()
        f8 = npyformat.load(DATA / "numpy_written_f8.npy")
        assert f8.tobytes() == (np.arange(12, dtype="<f8").reshape(3, 4) * np.pi).tobytes()
        arr = rng.standard_normal((4, 3, 5))
        assert npyformat.from_bytes(npy_bytes_handwritten(arr)).tobytes() == arr.tobytes()
    b.check()
