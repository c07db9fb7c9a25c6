"""Ordered conditioning specifications and the sparse joint precision factor.

A specification fixes, for every latent variable, which earlier latents
and which noisy responses it conditions on. Three schemes are provided:

* interweaved ("iw"): variables alternate (y1, t1, y2, t2, ...); each
  response conditions only on its own latent, and each latent splits its
  m nearest previous neighbours into latent and response parts so that
  the latent part is as large as possible without creating fill-in.
* response-first ("rf"): all responses come first and condition on
  nothing; each latent conditions on its m nearest locations overall,
  taking the latent when it is ordered earlier and the response there
  otherwise.
* low-rank ("lowrank"): interweaved layout where every latent conditions
  on the same leading latents, which reproduces a modified predictive
  process and serves as a comparison baseline.

From a specification and pseudo-variances d, the joint upper-triangular
factor U is filled column by column from conditional regressions onto the
conditioning sets, so that U U' is the precision of the implied joint
Gaussian of (responses, latents).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import (
    Ordering,
    coordinate_order,
    maxmin_order,
    nearest_m_any_all,
    nearest_m_previous_all,
)
from .kernels import matern
from .sparse import NotPositiveDefiniteError, SparseUpperTri, aat, rchol, solve_upper
from .validation import check_coords, check_vector

__all__ = [
    "VecchiaSpec",
    "UFactor",
    "build_spec_iw",
    "build_spec_rf",
    "build_spec_lowrank",
    "build_spec_prediction",
    "compute_U",
    "posterior",
    "posterior_mean",
]

# dense ordered covariance is cached on the spec below this many latents
_DENSE_K_MAX = 1500
# target number of small-system entries per assembly chunk
_CHUNK_BUDGET = 2_000_000
# cache per-chunk distance blocks up to this total entry count
_DIST_CACHE_MAX = 60_000_000


@dataclass
class VecchiaSpec:
    """Conditioning structure over ordered locations.

    All index arrays refer to positions in the latent ordering. The joint
    variable vector x has ``n_x`` entries; ``x_of_y[i]`` and ``x_of_t[i]``
    give the positions of latent i and of its response (-1 when the
    location carries no response, as for prediction points).
    """

    scheme: str
    m: int
    ordering: Ordering
    coords: np.ndarray  # ordered latent coordinates (n_latent, d)
    q_y: list
    q_t: list
    has_response: np.ndarray
    x_of_y: np.ndarray
    x_of_t: np.ndarray
    cond: list  # per x position, sorted conditioning positions in x
    x_loc: np.ndarray  # ordered-latent index per x position
    x_is_t: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_latent(self):
        return self.coords.shape[0]

    @property
    def n_response(self):
        return int(self.has_response.sum())

    @property
    def n_x(self):
        return self.n_latent + self.n_response

    def response_rows(self):
        """x positions of the responses, in latent order."""
        return self.x_of_t[self.has_response]

    def response_latents(self):
        """Ordered-latent indices that carry a response, in latent order."""
        return np.flatnonzero(self.has_response)

    def validate(self):
        for i in range(self.n_latent):
            qy, qt = self.q_y[i], self.q_t[i]
            if np.intersect1d(qy, qt).size > 0:
                raise ValueError(f"latent {i}: overlapping conditioning sets")
            if len(qy) + len(qt) > self.m:
                raise ValueError(f"latent {i}: conditioning set exceeds m")
        return self

    def _pattern(self):
        """Static CSC pattern of U: (indptr, indices, per-column sizes)."""
        if "pattern" not in self._cache:
            sizes = np.array([len(c) for c in self.cond], dtype=np.int64)
            indptr = np.zeros(self.n_x + 1, dtype=np.int64)
            indptr[1:] = np.cumsum(sizes + 1)
            indices = np.empty(indptr[-1], dtype=np.int64)
            for i, c in enumerate(self.cond):
                indices[indptr[i] : indptr[i] + sizes[i]] = c
                indices[indptr[i + 1] - 1] = i
            self._cache["pattern"] = (indptr, indices, sizes)
        return self._cache["pattern"]

    def _dense_cov(self, params):
        """Ordered kernel matrix for small problems; one entry deep."""
        if self.n_latent > _DENSE_K_MAX:
            return None
        if "dist" not in self._cache:
            self._cache["dist"] = cdist(self.coords, self.coords)
        if self._cache.get("K_params") != params:
            self._cache["K"] = matern(self._cache["dist"], params)
            self._cache["K_params"] = params
        return self._cache["K"]

    def _plan(self):
        """Chunked padded layout of the conditioning sets, reused across
        factor rebuilds; distance blocks are cached when affordable."""
        if "plan" in self._cache:
            return self._cache["plan"]
        indptr, indices, sizes = self._pattern()
        nx = self.n_x
        total_cost = int(np.sum((sizes + 1) ** 2))
        keep_dists = self.n_latent > _DENSE_K_MAX and total_cost <= _DIST_CACHE_MAX
        chunks = []
        start = 0
        while start < nx:
            stop = start + 1
            budget = (sizes[start] + 1) ** 2
            while stop < nx and budget + (sizes[stop] + 1) ** 2 <= _CHUNK_BUDGET:
                budget += (sizes[stop] + 1) ** 2
                stop += 1
            cols = np.arange(start, stop)
            mm = int(sizes[cols].max())
            cpad = np.zeros((cols.size, mm), dtype=np.int64)
            valid = np.zeros((cols.size, mm), dtype=bool)
            for k, i in enumerate(cols):
                s = sizes[i]
                cpad[k, :s] = indices[indptr[i] : indptr[i] + s]
                valid[k, :s] = True
            loc_c = self.x_loc[cpad]
            loc_i = self.x_loc[cols]
            dists = _chunk_distances(self.coords, loc_c, loc_i) if keep_dists else None
            chunks.append((cols, cpad, valid, loc_c, loc_i, dists))
            start = stop
        self._cache["plan"] = chunks
        return chunks


def _chunk_distances(coords, loc_c, loc_i):
    Xc = coords[loc_c]
    Xi = coords[loc_i]
    Dcc = np.linalg.norm(Xc[:, :, None, :] - Xc[:, None, :, :], axis=-1)
    Dci = np.linalg.norm(Xc - Xi[:, None, :], axis=-1)
    return Dcc, Dci


def _ordering_for(coords, ordering, default_1d="coordinate"):
    if isinstance(ordering, Ordering):
        return ordering
    if ordering is None or ordering == "auto":
        if coords.shape[1] == 1 and default_1d == "coordinate":
            return coordinate_order(coords)
        return maxmin_order(coords)
    if ordering == "coordinate":
        return coordinate_order(coords)
    if ordering == "maxmin":
        return maxmin_order(coords)
    raise ValueError(f"unknown ordering {ordering!r}")


def build_spec_iw(coords, m, ordering=None):
    """Interweaved specification.

    The conditioning set q(i) holds the positions of the m nearest
    previous locations. Its latent part is seeded with the anchor k_i
    whose own latent part overlaps q(i) the most (ties to the spatially
    closest, then lowest index) and extended by that overlap; the rest
    goes to the response part. With 1-D coordinate ordering this makes
    the latent part all of q(i).
    """
    X = check_coords(coords)
    if m < 1:
        raise ValueError("m must be >= 1")
    ordering = _ordering_for(X, ordering)
    Xo = X[ordering.perm]
    n = Xo.shape[0]
    prev = nearest_m_previous_all(Xo, m)

    q_y, q_t = [], []
    qy_sets = []
    for i in range(n):
        q = prev[i]
        if q.size == 0:
            q_y.append(np.empty(0, dtype=np.int64))
            q_t.append(np.empty(0, dtype=np.int64))
            qy_sets.append(frozenset())
            continue
        qset = set(q.tolist())
        best = None
        for j in q:
            overlap = len(qy_sets[j] & qset)
            key = (-overlap, float(np.linalg.norm(Xo[j] - Xo[i])), int(j))
            if best is None or key < best[0]:
                best = (key, int(j))
        k_i = best[1]
        qy = {k_i} | (qy_sets[k_i] & qset)
        qt = qset - qy
        q_y.append(np.array(sorted(qy), dtype=np.int64))
        q_t.append(np.array(sorted(qt), dtype=np.int64))
        qy_sets.append(frozenset(qy))

    return _assemble_iw_layout("iw", m, ordering, Xo, q_y, q_t)


def build_spec_lowrank(coords, m, ordering=None):
    """Low-rank baseline: interweaved layout where latent i conditions on
    the first min(m, i) ordered latents regardless of distance."""
    X = check_coords(coords)
    if m < 1:
        raise ValueError("m must be >= 1")
    ordering = _ordering_for(X, ordering, default_1d="maxmin")
    Xo = X[ordering.perm]
    n = Xo.shape[0]
    q_y = [np.arange(min(m, i), dtype=np.int64) for i in range(n)]
    q_t = [np.empty(0, dtype=np.int64) for _ in range(n)]
    return _assemble_iw_layout("lowrank", m, ordering, Xo, q_y, q_t)


def _assemble_iw_layout(scheme, m, ordering, Xo, q_y, q_t):
    n = Xo.shape[0]
    x_of_y = 2 * np.arange(n, dtype=np.int64)
    x_of_t = x_of_y + 1
    cond = []
    for i in range(n):
        cond.append(np.sort(np.concatenate([x_of_y[q_y[i]], x_of_t[q_t[i]]])))
        cond.append(np.array([x_of_y[i]], dtype=np.int64))
    x_loc = np.repeat(np.arange(n, dtype=np.int64), 2)
    x_is_t = np.tile(np.array([False, True]), n)
    return VecchiaSpec(
        scheme=scheme,
        m=m,
        ordering=ordering,
        coords=Xo,
        q_y=q_y,
        q_t=q_t,
        has_response=np.ones(n, dtype=bool),
        x_of_y=x_of_y,
        x_of_t=x_of_t,
        cond=cond,
        x_loc=x_loc,
        x_is_t=x_is_t,
    )


def build_spec_rf(coords, m, ordering=None):
    """Response-first specification.

    Responses are independent up front; latent i conditions on its m
    nearest locations including itself: the latent for neighbours ordered
    before i, the response otherwise.
    """
    X = check_coords(coords)
    ordering = _ordering_for(X, ordering, default_1d="maxmin")
    return _build_rf_layout(
        "rf", m, ordering, X[ordering.perm], np.ones(X.shape[0], dtype=bool)
    )


def build_spec_prediction(obs_coords, pred_coords, m, ordering=None):
    """Response-first specification over observed plus prediction locations.

    All latents are ordered jointly by max-min distance; prediction
    locations carry no response, so later-ordered neighbours at them are
    dropped from the conditioning sets.
    """
    Xobs = check_coords(obs_coords)
    Xpred = check_coords(pred_coords, allow_empty=True)
    if Xpred.shape[0] and Xpred.shape[1] != Xobs.shape[1]:
        raise ValueError("prediction locations have a different dimension")
    combined = np.vstack([Xobs, Xpred])
    check_coords(combined)  # a prediction point on an observed location is an error
    if ordering is None:
        ordering = maxmin_order(combined)
    has_response = ordering.perm < Xobs.shape[0]
    return _build_rf_layout(
        "rf", min(m, combined.shape[0]), ordering, combined[ordering.perm], has_response
    )


def _build_rf_layout(scheme, m, ordering, Xo, has_response):
    n = Xo.shape[0]
    if m < 1:
        raise ValueError("m must be >= 1")
    neigh = nearest_m_any_all(Xo, min(m, n))
    n_resp = int(has_response.sum())
    resp_rank = np.cumsum(has_response) - 1  # meaningful where has_response

    x_of_y = n_resp + np.arange(n, dtype=np.int64)
    x_of_t = np.where(has_response, resp_rank, -1).astype(np.int64)

    q_y, q_t, cond = [], [], []
    for _ in range(n_resp):
        cond.append(np.empty(0, dtype=np.int64))
    for i in range(n):
        q = neigh[i]
        qy = np.sort(q[q < i])
        qt = np.sort(q[(q >= i) & has_response[q]])
        q_y.append(qy)
        q_t.append(qt)
        cond.append(np.sort(np.concatenate([x_of_y[qy], resp_rank[qt]])))

    x_loc = np.concatenate([np.flatnonzero(has_response), np.arange(n, dtype=np.int64)])
    x_is_t = np.concatenate([np.ones(n_resp, dtype=bool), np.zeros(n, dtype=bool)])
    return VecchiaSpec(
        scheme=scheme,
        m=m,
        ordering=ordering,
        coords=Xo,
        q_y=q_y,
        q_t=q_t,
        has_response=has_response,
        x_of_y=x_of_y,
        x_of_t=x_of_t,
        cond=cond,
        x_loc=x_loc,
        x_is_t=x_is_t,
    )


@dataclass
class UFactor:
    """Sparse joint factor with views of its latent and response rows."""

    u: SparseUpperTri
    spec: VecchiaSpec
    _cache: dict = field(default_factory=dict, repr=False)

    def _rows(self):
        if "rows" not in self._cache:
            csr = self.u.to_scipy().tocsr()
            self._cache["rows"] = (
                csr[self.spec.x_of_y],
                csr[self.spec.response_rows()],
            )
        return self._cache["rows"]

    @property
    def u_y(self):
        return self._rows()[0]

    @property
    def u_t(self):
        return self._rows()[1]

    def log_diag_sum(self):
        return float(np.sum(np.log(self.u.diagonal())))


def compute_U(spec, params, d):
    """Fill the joint factor for pseudo-variances ``d``.

    ``d`` holds one positive value per response, aligned with the latent
    ordering of the observed locations. Column i regresses variable x_i
    on its conditioning set under the joint covariance C, in which
    latents and responses share the kernel value of their locations and
    each response adds its d on the diagonal. The column receives
    diagonal r^{-1/2} and off-diagonal entries -b r^{-1/2} from the
    regression weights b and the residual variance r.
    """
    d = check_vector(d, spec.n_response, "pseudo-variances")
    if np.any(d <= 0):
        raise ValueError("pseudo-variances must be positive")
    indptr, indices, sizes = spec._pattern()
    nx = spec.n_x
    data = np.empty(indptr[-1], dtype=np.float64)

    d_x = np.zeros(nx)
    d_x[spec.response_rows()] = d
    dense_K = spec._dense_cov(params)

    diag_slots = indptr[1:] - 1
    cond_starts = np.concatenate([[0], np.cumsum(sizes)])
    cond_slots = np.delete(np.arange(indptr[-1]), diag_slots)
    rinv_all = np.empty(nx)

    for cols, cpad, valid, loc_c, loc_i, dists in spec._plan():
        mm = cpad.shape[1]
        if dense_K is not None:
            Ccc = dense_K[loc_c[:, :, None], loc_c[:, None, :]]
            Cci = dense_K[loc_c, loc_i[:, None]]
        elif dists is not None:
            Ccc = matern(dists[0], params)
            Cci = matern(dists[1], params)
        else:
            Dcc, Dci = _chunk_distances(spec.coords, loc_c, loc_i)
            Ccc = matern(Dcc, params)
            Cci = matern(Dci, params)
        Cii = np.full(cols.size, params.variance) + d_x[cols]

        if mm:
            vmask = valid.astype(np.float64)
            Ccc *= vmask[:, :, None]
            Ccc *= vmask[:, None, :]
            ar = np.arange(mm)
            Ccc[:, ar, ar] = np.where(valid, Ccc[:, ar, ar] + d_x[cpad], 1.0)
            Cci *= vmask
            try:
                L = np.linalg.cholesky(Ccc)
            except np.linalg.LinAlgError:
                bad = _locate_bad_column(Ccc, cols)
                raise NotPositiveDefiniteError(bad, "conditioning covariance") from None
            b = _tri_solve_batched(L, Cci)
            r = Cii - np.einsum("bj,bj->b", b, Cci)
        else:
            b = np.zeros((cols.size, 0))
            r = Cii

        if np.any(r <= 0):
            bad = int(cols[int(np.argmax(r <= 0))])
            raise NotPositiveDefiniteError(bad, "residual variance in joint factor")
        rinv = 1.0 / np.sqrt(r)
        rinv_all[cols] = rinv
        if mm:
            vals = -b * rinv[:, None]
            lo, hi = cond_starts[cols[0]], cond_starts[cols[-1] + 1]
            data[cond_slots[lo:hi]] = vals[valid]

    data[diag_slots] = rinv_all
    u = SparseUpperTri(n=nx, indptr=indptr.copy(), indices=indices.copy(), data=data)
    return UFactor(u=u, spec=spec)


def _tri_solve_batched(L, rhs):
    """Solve L L' b = rhs for stacked lower-triangular Cholesky factors."""
    mm = rhs.shape[1]
    z = np.empty_like(rhs)
    for k in range(mm):
        acc = rhs[:, k] - np.einsum("bj,bj->b", L[:, k, :k], z[:, :k])
        z[:, k] = acc / L[:, k, k]
    out = np.empty_like(rhs)
    for k in range(mm - 1, -1, -1):
        acc = z[:, k] - np.einsum("bj,bj->b", L[:, k + 1 :, k], out[:, k + 1 :])
        out[:, k] = acc / L[:, k, k]
    return out


def _locate_bad_column(Ccc, cols):
    for k in range(Ccc.shape[0]):
        try:
            np.linalg.cholesky(Ccc[k])
        except np.linalg.LinAlgError:
            return int(cols[k])
    return int(cols[0])


def posterior(ufactor, need_w=True):
    """Posterior precision of the latents given the responses.

    Returns (W, V) with W = U_y U_y' and V = rchol(W), both indexed by
    the latent ordering. In the response-first layout the latent block
    of U is itself upper triangular in the latent ordering, so W arrives
    in factored form and V is read off directly; this is what keeps the
    factorization cost linear. ``need_w=False`` skips materializing W.
    """
    spec = ufactor.spec
    W = aat(ufactor.u_y) if need_w else None
    if spec.scheme == "rf":
        V = _extract_latent_block(ufactor)
    else:
        if W is None:
            W = aat(ufactor.u_y)
        V = rchol(W)
    return W, V


def _extract_latent_block(ufactor):
    """The latent rows and columns of U as an upper-triangular factor.

    Valid for the response-first layout, where latent columns are the
    trailing block and every latent row index is past the responses.
    """
    spec = ufactor.spec
    u = ufactor.u
    n_resp = spec.n_response
    n_lat = spec.n_latent
    lo = u.indptr[n_resp]
    idx = u.indices[lo:]
    dat = u.data[lo:]
    sizes = np.diff(u.indptr[n_resp:])
    col_of = np.repeat(np.arange(n_lat), sizes)
    keep = idx >= n_resp
    counts = np.bincount(col_of[keep], minlength=n_lat)
    indptr = np.zeros(n_lat + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(counts)
    return SparseUpperTri(
        n=n_lat, indptr=indptr, indices=idx[keep] - n_resp, data=dat[keep]
    )


def posterior_mean(ufactor, V, t, mu_latent):
    """Posterior mean of the latents given responses ``t``.

    Evaluates mu - (V')^{-1} V^{-1} U_y U_t' (t - mu_t) with two sparse
    triangular solves. ``t`` is aligned with the latent ordering of the
    observed locations; ``mu_latent`` covers every latent in order.
    """
    spec = ufactor.spec
    mu_latent = check_vector(mu_latent, spec.n_latent, "latent mean")
    t = check_vector(t, spec.n_response, "responses")
    mu_t = mu_latent[spec.response_latents()]
    rhs = ufactor.u_y @ (ufactor.u_t.T @ (t - mu_t))
    inner = solve_upper(V, rhs)
    correction = solve_upper(V, inner, transpose=True)
    return mu_latent - correction
