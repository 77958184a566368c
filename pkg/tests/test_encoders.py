import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ddikit.encoders import (GraphTransformerLayer, HIGEncoder, InterGATLayer, IntraGCNLayer,
                             MolGCN, SageEncoder, SageLayer, segment_softmax)


@pytest.fixture(autouse=True)
def double_precision():
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(old)


def und(pairs):
    """Both directions of undirected pairs as a (2, E) tensor."""
    e = torch.tensor(pairs, dtype=torch.long).reshape(-1, 2)
    return torch.cat([e, e.flip(1)]).T.contiguous()


def set_weight(layer, w):
    with torch.no_grad():
        layer.weight.copy_(torch.as_tensor(w, dtype=layer.weight.dtype))


def relu(x):
    return np.maximum(x, 0)


def bipartite(nu, nv):
    return und([(i, nu + j) for i in range(nu) for j in range(nv)])


# -- segment softmax --------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 8), st.integers(0, 10**6))
def test_segment_softmax_rows_sum_to_one(n_items, n_groups, seed):
    g = torch.Generator().manual_seed(seed)
    scores = torch.randn(n_items, 3, generator=g) * 20
    index = torch.randint(n_groups, (n_items,), generator=g)
    w = segment_softmax(scores, index, n_groups)
    sums = torch.zeros(n_groups, 3).index_add(0, index, w)
    present = torch.bincount(index, minlength=n_groups) > 0
    assert torch.allclose(sums[present], torch.ones_like(sums[present]), atol=1e-12)
    assert (w >= 0).all()


def test_segment_softmax_handles_large_scores():
    w = segment_softmax(torch.tensor([1000.0, 1001.0, -1000.0]), torch.tensor([0, 0, 1]), 2)
    assert torch.isfinite(w).all()
    assert w[2] == 1.0


# -- GraphSAGE --------------------------------------------------------------------

def test_sage_mean_of_identical_neighbours():
    layer = SageLayer(2, 2)
    set_weight(layer.W1, np.eye(2))
    x = torch.tensor([[0.0, 0.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
    edges = und([(0, 1), (0, 2), (0, 3)])
    msg = layer.W1(x)[edges[0]]
    agg = torch.zeros(4, 2).index_add(0, edges[1], msg)[0] / 3
    assert torch.allclose(agg, torch.tensor([1.0, 2.0]))


def test_sage_star_hand_evaluation():
    layer = SageLayer(2, 2)
    W1 = np.array([[1.0, -1.0], [0.5, 2.0]])
    W2 = np.array([[1.0, 0.0, 0.5, -1.0], [-0.5, 1.0, 1.0, 0.25]])
    set_weight(layer.W1, W1)
    set_weight(layer.W2, W2)
    X = np.array([[1.0, 2.0], [0.5, -1.0], [-2.0, 1.0]])  # hub 0, leaves 1 and 2
    out = layer(torch.tensor(X), und([(0, 1), (0, 2)])).detach().numpy()
    nbrs = {0: [1, 2], 1: [0], 2: [0]}
    for i in range(3):
        agg = np.mean([W1 @ X[j] for j in nbrs[i]], axis=0)
        np.testing.assert_allclose(out[i], relu(W2 @ np.concatenate([X[i], agg])), atol=1e-12)


def test_sage_isolated_node_aggregates_zero():
    layer = SageLayer(3, 3)
    x = torch.randn(3, 3)
    out = layer(x, und([(0, 1)]))
    expected = torch.relu(layer.W2(torch.cat([x[2], torch.zeros(3)])))
    assert torch.allclose(out[2], expected)


def test_sage_zero_layers_is_identity():
    enc = SageEncoder(5, d0=4, hidden=4, n_layers=0)
    assert torch.equal(enc(und([(0, 1)])), enc.embedding)


# -- Graph Transformer ------------------------------------------------------------

def dense_transformer(layer, h, edges, self_loops):
    """Materialize every head's full masked attention matrix."""
    h = h.detach().numpy()
    n = h.shape[0]
    mask = np.zeros((n, n), bool)
    for s, d in edges.T.tolist():
        mask[d, s] = True
    if self_loops:
        mask |= np.eye(n, dtype=bool)
    Q, K, V = (getattr(layer, m).weight.detach().numpy() for m in "QKV")
    heads, dn = layer.heads, layer.dn
    outs, attn = [], []
    for k in range(heads):
        sl = slice(k * dn, (k + 1) * dn)
        q, kk, v = h @ Q[sl].T, h @ K[sl].T, h @ V[sl].T
        logits = np.where(mask, q @ kk.T / math.sqrt(dn), -np.inf)
        a = np.exp(logits - logits.max(1, keepdims=True))
        a /= a.sum(1, keepdims=True)
        attn.append(a)
        outs.append(a @ v)
    o = np.concatenate(outs, 1) @ layer.O.weight.detach().numpy().T
    if layer.residual:
        o = torch.nn.functional.layer_norm(torch.tensor(h + o), (h.shape[1],),
                                           layer.norm1.weight, layer.norm1.bias).detach().numpy()
    ffn = layer.W4(torch.nn.functional.gelu(layer.W3(torch.tensor(o)))).detach().numpy()
    if layer.residual:
        ffn = layer.norm2(torch.tensor(o + ffn)).detach().numpy()
    return ffn, attn


@pytest.mark.parametrize("self_loops", [True, False])
@pytest.mark.parametrize("residual", [True, False])
def test_transformer_matches_dense_oracle(self_loops, residual):
    torch.manual_seed(0)
    layer = GraphTransformerLayer(6, heads=2, self_loops=self_loops, residual=residual)
    h = torch.randn(4, 6)
    edges = und([(0, 1), (1, 2), (2, 3), (0, 2)])
    out, w = layer(h, edges)
    ref, attn = dense_transformer(layer, h, edges, self_loops)
    np.testing.assert_allclose(out.detach().numpy(), ref, atol=1e-10)
    full = edges if not self_loops else torch.cat([edges, torch.arange(4).repeat(2, 1)], 1)
    for e, (s, d) in enumerate(full.T.tolist()):
        for k in range(2):
            assert w[e, k].item() == pytest.approx(attn[k][d, s], abs=1e-12)


def test_transformer_single_neighbour_weight_one():
    layer = GraphTransformerLayer(4, heads=2, self_loops=False)
    _, w = layer(torch.randn(2, 4), und([(0, 1)]))
    assert torch.allclose(w, torch.ones_like(w))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6))
def test_transformer_rows_sum_to_one(n, seed):
    torch.manual_seed(seed)
    layer = GraphTransformerLayer(8, heads=2)
    edges = und([(i, j) for i in range(n) for j in range(i + 1, n) if torch.rand(()) < 0.4])
    _, w = layer(torch.randn(n, 8) * 3, edges)
    dst = torch.cat([edges[1], torch.arange(n)])
    sums = torch.zeros(n, 2).index_add(0, dst, w)
    assert torch.allclose(sums, torch.ones(n, 2), atol=1e-6)



@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=5), st.booleans(), st.integers(0, 10**6))
def test_transformer_batched_path_equals_edge_path(sizes, self_loops, seed):
    # graphs stored contiguously; isolated nodes included when self-loops are off
    g = torch.Generator().manual_seed(seed)
    pairs, start = [], 0
    for n in sizes:
        pairs += [(start + i, start + j) for i in range(n) for j in range(i + 1, n)
                  if torch.rand((), generator=g) < 0.5]
        start += n
    edges = und(pairs) if pairs else torch.zeros(2, 0, dtype=torch.long)
    index = torch.repeat_interleave(torch.arange(len(sizes)), torch.tensor(sizes))
    torch.manual_seed(seed)
    layer = GraphTransformerLayer(6, heads=2, self_loops=self_loops)
    h = torch.randn(start, 6, generator=g)
    out_edge, w_edge = layer(h, edges)
    out_block, w_block = layer(h, edges, index)
    assert torch.allclose(out_edge, out_block, atol=1e-12)
    assert torch.allclose(w_edge, w_block, atol=1e-12)

# -- intra GCN --------------------------------------------------------------------

def test_gcn_isolated_fragment_zero():
    layer = IntraGCNLayer(3, 3)
    out = layer(torch.randn(3, 3), und([(0, 1)]))
    assert torch.equal(out[2], torch.zeros(3))


def test_gcn_two_fragment_chain():
    layer = IntraGCNLayer(2, 2)
    W = np.array([[1.0, -2.0], [0.5, 1.0]])
    set_weight(layer.W_intra, W)
    z = np.array([[1.0, 1.0], [2.0, -1.0]])
    out = layer(torch.tensor(z), und([(0, 1)])).detach().numpy()
    np.testing.assert_allclose(out[0], relu(W @ z[1]))
    np.testing.assert_allclose(out[1], relu(W @ z[0]))


def test_gcn_path_of_three():
    layer = IntraGCNLayer(1, 1)
    set_weight(layer.W_intra, [[1.0]])
    z = torch.tensor([[1.0], [0.0], [1.0]])
    out = layer(z, und([(0, 1), (1, 2)]))
    # middle node has degree 2, ends degree 1
    assert out[1].item() == pytest.approx(2 / math.sqrt(2))
    z = torch.tensor([[0.0], [1.0], [0.0]])
    assert layer(z, und([(0, 1), (1, 2)]))[0].item() == pytest.approx(1 / math.sqrt(2))


# -- inter GAT --------------------------------------------------------------------

def test_gat_singleton_alpha_one():
    layer = InterGATLayer(3, 4, heads=2)
    _, alpha = layer(torch.randn(2, 3), bipartite(1, 1))
    assert torch.allclose(alpha, torch.ones_like(alpha))


def test_gat_two_by_two_hand_evaluation():
    layer = InterGATLayer(2, 2, heads=1)
    W = np.array([[1.0, 0.5], [-1.0, 2.0]])
    a = np.array([0.3, -0.7, 1.1, 0.4])
    set_weight(layer.W_inter, W)
    with torch.no_grad():
        layer.a.copy_(torch.tensor(a)[None])
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 2.0]])
    edges = bipartite(2, 2)
    out, alpha = layer(torch.tensor(z), edges)
    wz = z @ W.T
    lrelu = lambda x: np.where(x > 0, x, 0.2 * x)  # noqa: E731
    M = {0: [2, 3], 1: [2, 3], 2: [0, 1], 3: [0, 1]}
    expected_alpha = {}
    for i, js in M.items():
        e = np.array([lrelu(a @ np.concatenate([wz[i], wz[j]])) for j in js])
        p = np.exp(e) / np.exp(e).sum()
        for j, pj in zip(js, p):
            expected_alpha[(j, i)] = pj
        np.testing.assert_allclose(out[i].detach().numpy(),
                                   relu(sum(pj * wz[j] for j, pj in zip(js, p))), atol=1e-12)
    for e, (s, d) in enumerate(edges.T.tolist()):
        assert alpha[e, 0].item() == pytest.approx(expected_alpha[(s, d)], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6))
def test_gat_rows_sum_to_one(nu, nv, seed):
    torch.manual_seed(seed)
    layer = InterGATLayer(5, 4, heads=2)
    edges = bipartite(nu, nv)
    _, alpha = layer(torch.randn(nu + nv, 5) * 3, edges)
    sums = torch.zeros(nu + nv, 2).index_add(0, edges[1], alpha)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)


# -- HIG encoder ------------------------------------------------------------------

def hig_inputs(seed=0, nu=3, nv=2):
    torch.manual_seed(seed)
    z = torch.randn(nu + nv, 6)
    intra = und([(0, 1), (1, 2), (3, 4)])
    return z, intra, bipartite(nu, nv)


def test_hig_zero_inter_is_pure_intra():
    z, intra, inter = hig_inputs()
    enc = HIGEncoder(6, 4, n_layers=2, heads=2)
    with torch.no_grad():
        for layer in enc.inter:
            layer.W_inter.weight.zero_()
    out, _ = enc(z, intra, inter)
    ref = z
    for layer in enc.intra:
        ref = layer(ref, intra)
    assert torch.allclose(out, ref)


def test_hig_zero_intra_is_pure_inter():
    z, intra, inter = hig_inputs()
    enc = HIGEncoder(6, 4, n_layers=2, heads=2)
    with torch.no_grad():
        for layer in enc.intra:
            layer.W_intra.weight.zero_()
    out, attn = enc(z, intra, inter)
    ref = z
    for layer in enc.inter:
        ref, a = layer(ref, inter)
    assert torch.allclose(out, ref)
    assert torch.allclose(attn, a[:, 0])


def test_hig_branch_sum_oracle():
    z, intra, inter = hig_inputs(3)
    enc = HIGEncoder(6, 4, n_layers=3, heads=2)
    out, attn = enc(z, intra, inter)
    ref = z
    for gcn, gat in zip(enc.intra, enc.inter):
        ref = gcn(ref, intra) + gat(ref, inter)[0]
    assert torch.allclose(out, ref)
    assert enc.inter[-1].heads == 1 and enc.inter[0].heads == 2
    assert attn.shape == (inter.shape[1],)


# -- molecular GCN ----------------------------------------------------------------

def test_molgcn_single_atom_identity():
    enc = MolGCN(3, 3, n_layers=1)
    set_weight(enc.W_M[0], np.eye(3))
    x = torch.tensor([[1.0, -2.0, 0.5]])
    out = enc(x, torch.zeros(2, 0, dtype=torch.long), torch.zeros(1, dtype=torch.long), 1)
    assert torch.allclose(out[0], torch.relu(x[0]))


def test_molgcn_three_atom_chain():
    enc = MolGCN(2, 2, n_layers=1)
    W = np.array([[1.0, -1.0], [2.0, 0.5]])
    set_weight(enc.W_M[0], W)
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    A = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], float)  # with self-loops
    D = np.diag(1 / np.sqrt(A.sum(1)))
    expected = relu(D @ A @ D @ X @ W.T).sum(0)
    out = enc(torch.tensor(X), und([(0, 1), (1, 2)]), torch.zeros(3, dtype=torch.long), 1)
    np.testing.assert_allclose(out[0].detach().numpy(), expected, atol=1e-12)


def test_molgcn_atom_permutation_invariant():
    torch.manual_seed(1)
    enc = MolGCN(5, 4, n_layers=2)
    x = torch.randn(5, 5)
    pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 4)]
    perm = torch.randperm(5)
    inv = torch.argsort(perm)
    out = enc(x, und(pairs), torch.zeros(5, dtype=torch.long), 1)
    pairs_p = [(int(inv[a]), int(inv[b])) for a, b in pairs]
    out_p = enc(x[perm], und(pairs_p), torch.zeros(5, dtype=torch.long), 1)
    assert torch.allclose(out, out_p)


# -- shared properties ------------------------------------------------------------

def _relabel(edges, inv):
    return inv[edges]


@pytest.mark.parametrize("kind", ["sage", "transformer", "gcn", "gat", "hig", "molgcn"])
def test_permutation_equivariance(kind):
    torch.manual_seed(7)
    n = 6
    x = torch.randn(n, 8)
    edges = und([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)])
    inter = bipartite(3, 3)
    perm = torch.randperm(n)
    inv = torch.argsort(perm)
    if kind == "sage":
        m = SageLayer(8, 4)
        f = lambda x, e, i: m(x, e)  # noqa: E731
    elif kind == "transformer":
        m = GraphTransformerLayer(8, heads=2)
        f = lambda x, e, i: m(x, e)[0]  # noqa: E731
    elif kind == "gcn":
        m = IntraGCNLayer(8, 4)
        f = lambda x, e, i: m(x, e)  # noqa: E731
    elif kind == "gat":
        m = InterGATLayer(8, 4, heads=2)
        f = lambda x, e, i: m(x, i)[0]  # noqa: E731
    elif kind == "hig":
        m = HIGEncoder(8, 4, n_layers=2)
        f = lambda x, e, i: m(x, e, i)[0]  # noqa: E731
    else:
        m = MolGCN(8, 4, n_layers=2)
        # per-atom states before pooling: one molecule per atom keeps them separate
        f = lambda x, e, i: m(x, e, torch.arange(n), n)  # noqa: E731
    out = f(x, edges, inter)
    out_p = f(x[perm], _relabel(edges, inv), _relabel(inter, inv))
    assert torch.allclose(out[perm], out_p, atol=1e-10)


@pytest.mark.parametrize("kind", ["sage", "transformer", "gcn", "gat", "molgcn"])
def test_layer_gradients_match_finite_differences(kind):
    torch.manual_seed(3)
    x = torch.randn(4, 5)
    edges = und([(0, 1), (1, 2), (2, 3)])
    inter = bipartite(2, 2)
    if kind == "sage":
        m = SageLayer(5, 3)
        f = lambda: m(x, edges)  # noqa: E731
    elif kind == "transformer":
        m = GraphTransformerLayer(6, heads=2)
        x = torch.randn(4, 6)
        f = lambda: m(x, edges)[0]  # noqa: E731
    elif kind == "gcn":
        m = IntraGCNLayer(5, 3)
        f = lambda: m(x, edges)  # noqa: E731
    elif kind == "gat":
        m = InterGATLayer(5, 4, heads=2)
        f = lambda: m(x, inter)[0]  # noqa: E731
    else:
        m = MolGCN(5, 3, n_layers=2)
        f = lambda: m(x, edges, torch.zeros(4, dtype=torch.long), 1)  # noqa: E731
    params = list(m.parameters())
    out = f()
    weights = torch.randn_like(out)
    grads = torch.autograd.grad((out * weights).sum(), params)
    for p, g in zip(params, grads):
        flat = p.detach().view(-1)
        for idx in range(0, flat.numel(), max(1, flat.numel() // 8)):
            orig = flat[idx].item()
            with torch.no_grad():
                flat[idx] = orig + 1e-6
                up = (f() * weights).sum().item()
                flat[idx] = orig - 1e-6
                down = (f() * weights).sum().item()
                flat[idx] = orig
            fd = (up - down) / 2e-6
            an = g.view(-1)[idx].item()
            assert abs(fd - an) <= 1e-4 * max(1.0, abs(fd), abs(an))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_no_nan_on_random_inputs(seed):
    torch.manual_seed(seed)
    x = torch.randn(6, 8)
    edges = und([(0, 1), (1, 2), (2, 3), (4, 5)])
    for out in (SageLayer(8, 8)(x, edges), GraphTransformerLayer(8, 2)(x, edges)[0],
                HIGEncoder(8, 8)(x, edges, bipartite(3, 3))[0],
                MolGCN(8, 8)(x, edges, torch.zeros(6, dtype=torch.long), 1)):
        assert torch.isfinite(out).all()
