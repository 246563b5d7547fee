"""Broken scalar, Raviart--Thomas and facet spaces on a mesh.

A :class:`Spaces` object bundles the per-element geometry with the reference
bases of one polynomial degree.  Physical RT functions are contravariant
Piola images of the reference basis, rescaled on facet dofs so that the
physical facet moments ``int_0^1 (r . n_E) L_k ds`` are Kronecker deltas.
"""

from __future__ import annotations

import numpy as np

from ..mesh import Mesh
from .quadrature import gauss_unit_interval
from .reference import legendre_on_unit, reference_element, rt_basis, scalar_basis


class DiffusionTensor:
    """Symmetric positive definite 2x2 tensor field.

    ``func(points, regions)`` returns an array of shape ``points.shape[:-1] + (2, 2)``;
    ``regions`` has the shape ``points.shape[:-1]``.
    """

    def __init__(self, func, bounds=(None, None), name=""):
        self.func = func
        self.bounds = bounds
        self.name = name

    def __call__(self, points, regions=None):
        points = np.asarray(points, dtype=float)
        if regions is None:
            regions = np.ones(points.shape[:-1], dtype=np.int64)
        return np.asarray(self.func(points, regions), dtype=float)

    def inverse(self, points, regions=None):
        A = self(points, regions)
        det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        inv = np.empty_like(A)
        inv[..., 0, 0] = A[..., 1, 1]
        inv[..., 1, 1] = A[..., 0, 0]
        inv[..., 0, 1] = -A[..., 0, 1]
        inv[..., 1, 0] = -A[..., 1, 0]
        return inv / det[..., None, None]

    def sqrt(self, points, regions=None, power=0.5):
        """``A^power`` via the symmetric eigendecomposition."""
        A = self(points, regions)
        w, V = np.linalg.eigh(A)
        return np.einsum("...ij,...j,...kj->...ik", V, w**power, V)

    @classmethod
    def identity(cls):
        return cls.constant(np.eye(2), name="identity")

    @classmethod
    def constant(cls, A, name="constant"):
        A = np.asarray(A, dtype=float)
        w = np.linalg.eigvalsh(A)

        def func(points, regions):
            return np.broadcast_to(A, points.shape[:-1] + (2, 2)).copy()

        return cls(func, (w.min(), w.max()), name)

    @classmethod
    def rotated(cls, theta, eig1, eig2, name="rotated"):
        """``Q(theta) diag(eig1, eig2) Q(theta)^T`` with ``theta(x, y)`` possibly varying."""

        def func(points, regions):
            t = np.broadcast_to(theta(points[..., 0], points[..., 1]), points.shape[:-1])
            c, s = np.cos(t), np.sin(t)
            A = np.empty(points.shape[:-1] + (2, 2))
            A[..., 0, 0] = eig1 * c * c + eig2 * s * s
            A[..., 1, 1] = eig1 * s * s + eig2 * c * c
            A[..., 0, 1] = A[..., 1, 0] = (eig1 - eig2) * c * s
            return A

        return cls(func, (min(eig1, eig2), max(eig1, eig2)), name)

    @classmethod
    def piecewise(cls, tensors: dict, name="piecewise"):
        """Region-wise constant tensors ``{region_tag: 2x2 array}``."""
        tensors = {k: np.asarray(v, dtype=float) for k, v in tensors.items()}
        eigs = np.concatenate([np.linalg.eigvalsh(v) for v in tensors.values()])

        def func(points, regions):
            A = np.zeros(points.shape[:-1] + (2, 2))
            for tag, T in tensors.items():
                A[regions == tag] = T
            return A

        return cls(func, (eigs.min(), eigs.max()), name)


class Spaces:
    """Broken P_p/Q_p, broken RT_p, and facet P_p spaces on one mesh."""

    def __init__(self, mesh: Mesh, p: int):
        self.mesh = mesh
        self.p = p
        self.kind = mesh.kind
        self.ref = reference_element(mesh.kind)
        self.scalar = scalar_basis(mesh.kind, p)
        self.rt = rt_basis(mesh.kind, p)
        self.nu = self.scalar.dim
        self.nq = self.rt.dim
        self.nfe = self.ref.num_facets
        self.nl = p + 1  # facet dofs per facet

        J, det, b = mesh.jacobians()
        self.J, self.det, self.b = J, det, b
        self.Jinv = np.linalg.inv(J)
        self.areas = det * self.ref.measure
        self.h = mesh.diameters()

        # physical lengths of local facets and outward normals
        v = mesh.vertices[mesh.elements]
        t = np.roll(v, -1, axis=1) - v
        self.local_facet_lengths = np.linalg.norm(t, axis=2)
        self.local_normals = np.stack([t[..., 1], -t[..., 0]], axis=-1) / self.local_facet_lengths[..., None]

        scale = np.ones((mesh.num_elements, self.nq))
        for i in range(self.nfe):
            sl = slice(i * self.nl, (i + 1) * self.nl)
            scale[:, sl] = (self.local_facet_lengths[:, i] / self.ref.facet_lengths[i])[:, None]
        self.rt_scale = scale

        # facet (multiplier) dofs: local facet i, mode k -> global facet dof
        ef = mesh.element_facets
        self.num_facet_dofs = mesh.num_facets * self.nl
        self.facet_dofs = (ef[:, :, None] * self.nl + np.arange(self.nl)).reshape(mesh.num_elements, -1)
        self.facet_flip = mesh.element_facet_sign < 0  # local param runs opposite to the facet's

        # div-conforming RT numbering: shared facet dofs then element interior dofs
        nint = self.nq - self.nfe * self.nl
        self.num_div_dofs = self.num_facet_dofs + mesh.num_elements * nint
        div_dofs = np.empty((mesh.num_elements, self.nq), dtype=np.int64)
        div_sign = np.ones((mesh.num_elements, self.nq))
        k = np.arange(self.nl)
        for i in range(self.nfe):
            sl = slice(i * self.nl, (i + 1) * self.nl)
            div_dofs[:, sl] = self.facet_dofs[:, sl]
            nb = self.facet_flip[:, i]
            div_sign[nb, sl] = (-1.0) ** (k + 1)
        div_dofs[:, self.nfe * self.nl :] = self.num_facet_dofs + (
            np.arange(mesh.num_elements)[:, None] * nint + np.arange(nint)
        )
        self.div_dofs = div_dofs
        self.div_sign = div_sign

    # -- maps -----------------------------------------------------------------
    def map_points(self, xhat):
        """Physical images of reference points: (ne, n, 2)."""
        return np.einsum("eij,nj->eni", self.J, np.atleast_2d(xhat)) + self.b[:, None, :]

    def point_regions(self, n):
        return np.repeat(self.mesh.regions[:, None], n, axis=1)

    def eval_scalar(self, xhat):
        """Values (n, nu) and physical gradients (ne, n, nu, 2)."""
        val, grad = self.scalar.eval(xhat)
        return val, np.einsum("nid,edk->enik", grad, self.Jinv)

    def eval_rt(self, xhat):
        """Physical values (ne, n, nq, 2) and divergences (ne, n, nq)."""
        val, div = self.rt.eval(xhat)
        s = self.rt_scale / self.det[:, None]
        values = np.einsum("ecd,nid->enic", self.J, val) * s[:, None, :, None]
        return values, div[None, :, :] * s[:, None, :]

    def facet_param(self, s):
        """Reference facet points and global facet parameters for each local facet.

        Returns ``xhat (nfe, n, 2)`` and ``s_global (ne, nfe, n)``.
        """
        s = np.asarray(s, dtype=float)
        xhat = self.ref.facet_points(s)
        sg = np.where(self.facet_flip[:, :, None], 1.0 - s[None, None, :], s[None, None, :])
        return xhat, sg

    # -- coefficient evaluation -------------------------------------------------
    def scalar_values(self, coeffs, xhat):
        """Evaluate broken scalar fields (ne, nu) at reference points: (ne, n)."""
        val, _ = self.scalar.eval(xhat)
        return coeffs @ val.T

    def scalar_gradients(self, coeffs, xhat):
        _, grad = self.eval_scalar(xhat)
        return np.einsum("enik,ei->enk", grad, coeffs)

    def flux_values(self, coeffs, xhat):
        vals, _ = self.eval_rt(xhat)
        return np.einsum("enic,ei->enc", vals, coeffs)

    def flux_divergence(self, coeffs, xhat):
        _, div = self.eval_rt(xhat)
        return np.einsum("eni,ei->en", div, coeffs)

    def broken_from_div(self, coeffs_div):
        """Broken RT coefficients (ne, nq) of a div-conforming coefficient vector."""
        return coeffs_div[self.div_dofs] * self.div_sign

    def facet_mode_values(self, s):
        return legendre_on_unit(self.p, s)

    def facet_line_rule(self, extra=2):
        return gauss_unit_interval(self.p + extra)
