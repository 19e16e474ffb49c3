"""One-dimensional hp meshes with refinement history and coarse-to-fine injection."""
import numpy as np
import scipy.sparse as sp

from .basis import lobatto_nodes, shape_values

MAX_ORDER = 10


class InvalidBounds(ValueError):
    pass


class OrderOutOfRange(ValueError):
    pass


class NotNested(ValueError):
    pass


class MeshFormatError(ValueError):
    pass


class Mesh1D:
    """Ordered partition of [x_L, x_R] with an order and a lineage per element.

    The lineage of an element is a tuple ``(root, b1, b2, ...)`` where ``root``
    is the index of the ancestor on the mesh the history started from and each
    ``b`` records which half (0 left, 1 right) was kept at a bisection. Two
    elements are siblings when their lineages differ only in the last entry.
    """

    def __init__(self, boundaries, orders, lineage=None):
        x = np.array(boundaries, dtype=float)
        p = np.array(orders, dtype=int)
        if x.ndim != 1 or len(x) < 2:
            raise InvalidBounds("need at least two boundaries")
        if not np.all(np.isfinite(x)) or np.any(np.diff(x) <= 0):
            raise InvalidBounds("boundaries must be finite and strictly increasing")
        if p.shape != (len(x) - 1,):
            raise ValueError(f"expected {len(x) - 1} orders, got {p.shape}")
        if np.any(p < 0) or np.any(p > MAX_ORDER):
            raise OrderOutOfRange(f"orders must lie in [0, {MAX_ORDER}]")
        if lineage is None:
            lineage = tuple((e,) for e in range(len(p)))
        lineage = tuple(tuple(int(v) for v in path) for path in lineage)
        if len(lineage) != len(p):
            raise ValueError("lineage length does not match element count")
        x.setflags(write=False)
        p.setflags(write=False)
        self.boundaries = x
        self.orders = p
        self.lineage = lineage

    @property
    def n_elem(self):
        return len(self.orders)

    @property
    def x_L(self):
        return float(self.boundaries[0])

    @property
    def x_R(self):
        return float(self.boundaries[-1])

    @property
    def sizes(self):
        return np.diff(self.boundaries)

    @property
    def centers(self):
        return 0.5 * (self.boundaries[1:] + self.boundaries[:-1])

    @property
    def n_dofs(self):
        return int(np.sum(self.orders + 1))

    def parent(self, e):
        path = self.lineage[e]
        return path[:-1] if len(path) > 1 else None

    def sibling_index(self, e):
        path = self.lineage[e]
        return path[-1] if len(path) > 1 else None

    def locate(self, x, side="left"):
        """Element index holding ``x``.

        With ``side="left"`` an interface point belongs to the element on its
        left (x_l < x <= x_r); ``x_L`` itself maps to the first element.
        """
        x = np.asarray(x, dtype=float)
        if side == "left":
            idx = np.searchsorted(self.boundaries, x, side="left") - 1
        else:
            idx = np.searchsorted(self.boundaries, x, side="right") - 1
        return np.clip(idx, 0, self.n_elem - 1)

    def same_geometry(self, other):
        return self.boundaries.shape == other.boundaries.shape and np.array_equal(
            self.boundaries, other.boundaries
        )

    def __eq__(self, other):
        if not isinstance(other, Mesh1D):
            return NotImplemented
        return (
            self.same_geometry(other)
            and np.array_equal(self.orders, other.orders)
            and self.lineage == other.lineage
        )

    def __hash__(self):
        return hash((self.boundaries.tobytes(), self.orders.tobytes(), self.lineage))

    def __repr__(self):
        return f"Mesh1D(n_elem={self.n_elem}, x=[{self.x_L}, {self.x_R}], p={sorted(set(self.orders.tolist()))})"


def uniform_mesh(x_L, x_R, n_elem, p):
    if not (np.isfinite(x_L) and np.isfinite(x_R)) or x_L >= x_R:
        raise InvalidBounds(f"need x_L < x_R, got {x_L}, {x_R}")
    if n_elem < 1:
        raise InvalidBounds("need at least one element")
    x = np.linspace(x_L, x_R, n_elem + 1)
    x[0], x[-1] = x_L, x_R
    return Mesh1D(x, [p] * n_elem)


def _check_marks(mesh, marks):
    marks = np.asarray(marks)
    if marks.shape != (mesh.n_elem,):
        raise ValueError(f"expected {mesh.n_elem} marks, got shape {marks.shape}")
    return marks


def refine_h(mesh, marks):
    """Bisect every marked element at its midpoint."""
    marks = _check_marks(mesh, marks).astype(bool)
    x, p, lineage = [mesh.boundaries[0]], [], []
    for e in range(mesh.n_elem):
        xl, xr = mesh.boundaries[e], mesh.boundaries[e + 1]
        if marks[e]:
            x += [0.5 * (xl + xr), xr]
            p += [mesh.orders[e]] * 2
            lineage += [mesh.lineage[e] + (0,), mesh.lineage[e] + (1,)]
        else:
            x.append(xr)
            p.append(mesh.orders[e])
            lineage.append(mesh.lineage[e])
    return Mesh1D(x, p, lineage)


def coarsen_h(mesh, marks):
    """Merge sibling pairs when both siblings are marked; other marks are ignored."""
    marks = _check_marks(mesh, marks).astype(bool)
    x, p, lineage = [mesh.boundaries[0]], [], []
    e = 0
    while e < mesh.n_elem:
        path = mesh.lineage[e]
        if (
            e + 1 < mesh.n_elem
            and marks[e]
            and marks[e + 1]
            and len(path) > 1
            and path[-1] == 0
            and mesh.lineage[e + 1] == path[:-1] + (1,)
        ):
            x.append(mesh.boundaries[e + 2])
            p.append(max(mesh.orders[e], mesh.orders[e + 1]))
            lineage.append(path[:-1])
            e += 2
        else:
            x.append(mesh.boundaries[e + 1])
            p.append(mesh.orders[e])
            lineage.append(path)
            e += 1
    return Mesh1D(x, p, lineage)


def enrich_p(mesh, increments):
    inc = np.asarray(increments, dtype=int)
    if inc.ndim == 0:
        inc = np.full(mesh.n_elem, int(inc))
    inc = _check_marks(mesh, inc)
    p = mesh.orders + inc
    if np.any(p < 0) or np.any(p > MAX_ORDER):
        raise OrderOutOfRange(f"enriched orders must lie in [0, {MAX_ORDER}]")
    return Mesh1D(mesh.boundaries, p, mesh.lineage)


def element_offsets(mesh):
    return np.concatenate([[0], np.cumsum(mesh.orders + 1)])


def parent_map(coarse, fine):
    """Index of the coarse element containing each fine element.

    Raises :class:`NotNested` unless every coarse boundary is a fine boundary
    and every fine order is at least the order of its containing element.
    """
    scale = coarse.x_R - coarse.x_L
    tol = 1e-12 * scale
    if abs(coarse.x_L - fine.x_L) > tol or abs(coarse.x_R - fine.x_R) > tol:
        raise NotNested("meshes cover different domains")
    j = np.searchsorted(fine.boundaries, coarse.boundaries)
    j = np.clip(j, 0, len(fine.boundaries) - 1)
    jm = np.clip(j - 1, 0, len(fine.boundaries) - 1)
    gap = np.minimum(
        np.abs(fine.boundaries[j] - coarse.boundaries), np.abs(fine.boundaries[jm] - coarse.boundaries)
    )
    if np.any(gap > tol):
        raise NotNested("coarse boundaries are not all present in the fine mesh")
    owner = coarse.locate(fine.centers, side="right")
    if np.any(fine.orders < coarse.orders[owner]):
        raise NotNested("fine orders must not be lower than coarse orders")
    return owner


class InjectionOperator:
    """Sparse map from coarse DOFs to fine DOFs reproducing coarse functions exactly."""

    def __init__(self, coarse, fine, matrix):
        self.coarse = coarse
        self.fine = fine
        self.matrix = matrix

    def __call__(self, U):
        return np.asarray(self.matrix @ np.asarray(U, dtype=float)).ravel()


def build_injection(coarse, fine):
    owner = parent_map(coarse, fine)
    off_c, off_f = element_offsets(coarse), element_offsets(fine)
    rows, cols, vals = [], [], []
    for f in range(fine.n_elem):
        c = owner[f]
        xl, xr = fine.boundaries[f], fine.boundaries[f + 1]
        x = 0.5 * (xl + xr) + 0.5 * (xr - xl) * lobatto_nodes(fine.orders[f])
        cl, cr = coarse.boundaries[c], coarse.boundaries[c + 1]
        xi = (2.0 * x - cl - cr) / (cr - cl)
        B = shape_values(coarse.orders[c], xi)
        B[np.abs(B) < 1e-15] = 0.0
        r, k = np.nonzero(B)
        rows.append(off_f[f] + r)
        cols.append(off_c[c] + k)
        vals.append(B[r, k])
    I = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.n_dofs, coarse.n_dofs),
    )
    return InjectionOperator(coarse, fine, I)


def write_mesh(mesh, path):
    lines = [f"mesh1d v1 {mesh.n_elem}"]
    for e in range(mesh.n_elem):
        lines.append(f"{mesh.boundaries[e]:.17g} {mesh.boundaries[e + 1]:.17g} {mesh.orders[e]}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def read_mesh(path=None, text=None):
    if text is None:
        with open(path) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split() if lines else []
    if len(head) != 3 or head[:2] != ["mesh1d", "v1"]:
        raise MeshFormatError("missing 'mesh1d v1 <n_elem>' header")
    n = int(head[2])
    if len(lines) != n + 1:
        raise MeshFormatError(f"expected {n} element lines, found {len(lines) - 1}")
    x, p = [], []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 3:
            raise MeshFormatError(f"line {i}: expected 'x_left x_right p'")
        xl, xr, pe = float(parts[0]), float(parts[1]), int(parts[2])
        if x and x[-1] != xl:
            raise MeshFormatError(f"line {i}: element does not start where the previous one ended")
        if not x:
            x.append(xl)
        x.append(xr)
        p.append(pe)
    return Mesh1D(x, p)
