import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oodkit.dataset import synth_generate
from oodkit.kpca import (
    KernelConfig,
    KpcaError,
    center_kernel,
    fit,
    jacobi_eigh,
    poly_kernel,
    transform,
)


class TestPolyKernel:
    def test_zero_vectors(self):
        cfg = KernelConfig(degree=3, gamma=1.0, coef0=1.0)
        assert poly_kernel(np.zeros(4), np.zeros(4), cfg) == 1.0

    def test_unit_example(self):
        cfg = KernelConfig(degree=3, gamma=1.0, coef0=1.0)
        assert poly_kernel(np.array([1.0, 0.0]), np.array([1.0, 0.0]), cfg) == 8.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        cfg = KernelConfig(degree=2, gamma=0.5, coef0=1.5)
        for _ in range(10):
            a, b = rng.standard_normal((2, 6))
            assert poly_kernel(a, b, cfg) == pytest.approx(poly_kernel(b, a, cfg))

    def test_default_gamma_is_reciprocal_dim(self):
        cfg = KernelConfig(degree=1, coef0=0.0)
        a = np.ones(8)
        assert poly_kernel(a, a, cfg) == pytest.approx(1.0)  # (8 * 1/8)^1

    def test_dim_mismatch(self):
        with pytest.raises(KpcaError):
            poly_kernel(np.zeros(2), np.zeros(3), KernelConfig())


class TestCenterKernel:
    def test_idempotent(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 5))
        k = x @ x.T
        once = center_kernel(k)
        np.testing.assert_allclose(center_kernel(once), once, atol=1e-12)

    def test_all_ones_becomes_zero(self):
        np.testing.assert_allclose(center_kernel(np.ones((4, 4))), 0.0, atol=1e-15)

    def test_direct_formula_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 4))
        k = x @ x.T
        j = np.full((4, 4), 1 / 4)
        expected = k - j @ k - k @ j + j @ k @ j
        np.testing.assert_allclose(center_kernel(k), expected, atol=1e-12)
        assert np.abs(center_kernel(k).sum(axis=1)).max() < 1e-5

    def test_non_square_rejected(self):
        with pytest.raises(KpcaError):
            center_kernel(np.zeros((2, 3)))


class TestJacobi:
    @given(st.integers(0, 10000))
    @settings(max_examples=20, deadline=None)
    def test_eigenpairs_residual(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.integers(2, 9)
        x = rng.standard_normal((m, m))
        a = (x + x.T) / 2
        vals, vecs = jacobi_eigh(a)
        residual = np.linalg.norm(a @ vecs - vecs * vals, axis=0).max()
        assert residual < 1e-6
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(m), atol=1e-10)

    def test_matches_numpy_eigh(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((8, 8))
        a = x @ x.T
        vals, _ = jacobi_eigh(a)
        np.testing.assert_allclose(np.sort(vals), np.linalg.eigvalsh(a), atol=1e-8)


class TestFitTransform:
    def test_eigenvalues_descending_positive(self):
        rng = np.random.default_rng(4)
        model = fit(rng.standard_normal((15, 4)), KernelConfig(target_dim=3))
        assert (model.eigenvalues > 0).all()
        assert (np.diff(model.eigenvalues) <= 0).all()

    def test_duplicate_rows_project_identically(self):
        rng = np.random.default_rng(5)
        rows = rng.standard_normal((10, 3))
        rows[7] = rows[2]
        model = fit(rows, KernelConfig())
        proj = transform(model, rows)
        np.testing.assert_allclose(proj[7], proj[2], atol=1e-8)

    def test_linear_kernel_matches_classical_pca(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((20, 5))
        model = fit(x, KernelConfig(degree=1, gamma=1.0, coef0=0.0, target_dim=2))
        proj = transform(model, x)
        xc = x - x.mean(axis=0)
        vals, vecs = np.linalg.eigh(xc.T @ xc)
        scores = xc @ vecs[:, np.argsort(vals)[::-1][:2]]
        for j in range(2):
            direct = np.abs(proj[:, j] - scores[:, j]).max()
            flipped = np.abs(proj[:, j] + scores[:, j]).max()
            assert min(direct, flipped) < 1e-4

    def test_train_projection_centered(self):
        rng = np.random.default_rng(6)
        rows = rng.standard_normal((12, 4))
        model = fit(rows, KernelConfig())
        proj = transform(model, rows)
        np.testing.assert_allclose(proj.mean(axis=0), 0.0, atol=1e-5)

    def test_heldout_duplicate_of_training_row(self):
        rng = np.random.default_rng(7)
        rows = rng.standard_normal((10, 3))
        model = fit(rows, KernelConfig())
        proj_train = transform(model, rows)
        proj_single = transform(model, rows[4])
        np.testing.assert_allclose(proj_single[0], proj_train[4], atol=1e-8)

    def test_blobs_stay_separated(self):
        ds = synth_generate(3, 40, 16, 10.0, 0.5, seed=8)
        rows = ds.embeddings.astype(np.float64)
        labels = np.array([int(l.split("_")[1]) for l in ds.labels])
        model = fit(rows, KernelConfig())
        proj = transform(model, rows)
        centroids = np.stack([proj[labels == c].mean(axis=0) for c in range(3)])
        nearest = np.argmin(((proj[:, None] - centroids[None]) ** 2).sum(-1), axis=1)
        assert (nearest == labels).mean() >= 0.95

    def test_gram_reconstruction(self):
        rng = np.random.default_rng(9)
        rows = rng.standard_normal((8, 3))
        cfg = KernelConfig(degree=2, gamma=0.5, coef0=1.0, target_dim=2)
        gamma = 0.5
        k = (gamma * rows @ rows.T + 1.0) ** 2
        kc = center_kernel(k)
        vals, vecs = jacobi_eigh(kc)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        pos = vals > 1e-10
        recon = (vecs[:, pos] * vals[pos]) @ vecs[:, pos].T
        assert np.linalg.norm(recon - kc, "fro") < 1e-4

    def test_row_permutation_invariance_up_to_sign(self):
        rng = np.random.default_rng(10)
        rows = rng.standard_normal((12, 4))
        perm = rng.permutation(12)
        a = transform(fit(rows, KernelConfig()), rows)
        b = transform(fit(rows[perm], KernelConfig()), rows[perm])
        for j in range(a.shape[1]):
            direct = np.abs(b[:, j] - a[perm, j]).max()
            flipped = np.abs(b[:, j] + a[perm, j]).max()
            assert min(direct, flipped) < 1e-6

    def test_too_few_rows_rejected(self):
        with pytest.raises(KpcaError):
            fit(np.zeros((2, 3)), KernelConfig(target_dim=2))

    def test_degenerate_data_rejected(self):
        rows = np.ones((6, 3))  # identical rows: centered kernel is zero
        with pytest.raises(KpcaError, match="positive eigenvalues"):
            fit(rows, KernelConfig(target_dim=2))

    def test_transform_dim_mismatch(self):
        rng = np.random.default_rng(11)
        model = fit(rng.standard_normal((6, 3)), KernelConfig())
        with pytest.raises(KpcaError):
            transform(model, np.zeros((2, 4)))


class TestProjectionDump:
    def test_projection_csv_format(self, tmp_path):
        from oodkit.kpca import write_projections

        proj = np.array([[1.5, -2.0], [0.25, 3.0]])
        path = tmp_path / "proj.csv"
        write_projections(path, proj)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "row_index,pc1,pc2"
        assert lines[1] == "0,1.5,-2"
        assert len(lines) == 3
