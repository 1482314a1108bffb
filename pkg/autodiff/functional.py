"""
Network and sampling operations: convolutions, channel softmax,
upsampling, bilinear sampling (with coordinate gradients) and the
masked L1 loss.

Feature maps are channel-first: C x H x W for images, C x D x H x W for
volumes. Sampling coordinates are (x, y) = (column, row) pairs in pixels.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from depthlab.exceptions import ContractError, DimensionError

from .ops import reshape
from .tensor import as_tensor, make_result


def _conv_inputs(x, weight, bias, spatial):
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != spatial + 1 or weight.ndim != spatial + 2:
        raise DimensionError(
            f'conv{spatial}d expects a {spatial + 1}-d input and {spatial + 2}-d '
            f'weights, got {x.shape} and {weight.shape}'
        )
    if weight.shape[1] != x.shape[0]:
        raise DimensionError(
            f'conv{spatial}d: input has {x.shape[0]} channels, weights expect {weight.shape[1]}'
        )
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f'conv{spatial}d: bias shape {bias.shape} != ({weight.shape[0]},)')
        inputs.append(bias)
    return x, weight, bias, inputs


def _convnd(x, weight, bias, stride, padding, spatial):
    x, weight, bias, inputs = _conv_inputs(x, weight, bias, spatial)
    kernel = weight.shape[2:]
    sizes = x.shape[1:]
    padded = tuple(n + 2 * padding for n in sizes)
    if any(k > n for k, n in zip(kernel, padded)):
        raise DimensionError(f'conv{spatial}d: kernel {kernel} does not fit padded input {padded}')
    out_sizes = tuple((n - k) // stride + 1 for n, k in zip(padded, kernel))

    xp = np.pad(x.data, [(0, 0)] + [(padding, padding)] * spatial)
    axes = tuple(range(1, spatial + 1))
    steps = (slice(None),) + (slice(None, None, stride),) * spatial
    windows = sliding_window_view(xp, kernel, axis=axes)[steps]

    letters = 'dhw'[-spatial:]
    taps = 'ijk'[:spatial]
    spec = f'c{letters}{taps},oc{taps}->o{letters}'
    out = np.einsum(spec, windows, weight.data, optimize=True)
    if bias is not None:
        out += bias.data.reshape((-1,) + (1,) * spatial)

    def backward(g):
        gxp = np.zeros_like(xp)
        for offset in np.ndindex(*kernel):
            region = (slice(None),) + tuple(
                slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(offset, out_sizes)
            )
            tap = weight.data[(slice(None), slice(None)) + offset]
            gxp[region] += np.einsum(f'o{letters},oc->c{letters}', g, tap)
        crop = (slice(None),) + tuple(slice(padding, padding + n) for n in sizes)
        gw = np.einsum(f'o{letters},c{letters}{taps}->oc{taps}', g, windows, optimize=True)
        grads = [gxp[crop], gw]
        if bias is not None:
            grads.append(g.sum(axis=axes))
        return grads

    return make_result(out, inputs, backward)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """
    Cross-correlate a C x H x W input with O x C x kh x kw weights.

    Output spatial size is floor((H + 2p - k) / s) + 1 per axis.
    """
    return _convnd(x, weight, bias, stride, padding, spatial=2)


def conv3d(x, weight, bias=None, stride=1, padding=0):
    """3-D analogue of conv2d for C x D x H x W volumes."""
    return _convnd(x, weight, bias, stride, padding, spatial=3)


def softmax(x, axis=0):
    """Softmax along `axis` (the channel axis by default)."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] < 1:
        raise DimensionError('softmax needs at least one channel')
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward)


def nearest_upsample2x(x):
    """Replicate every pixel of the last two axes into a 2x2 block."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError('nearest_upsample2x needs at least two axes')
    out = x.data.repeat(2, axis=-2).repeat(2, axis=-1)
    lead = x.shape[:-2]
    h, w = x.shape[-2:]

    def backward(g):
        return (g.reshape(lead + (h, 2, w, 2)).sum(axis=(-3, -1)),)

    return make_result(out, (x,), backward)


class _Corners:
    """Bilinear cell lookup for continuous (x, y) coordinates, clamped to the border."""

    def __init__(self, coords, height, width):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise DimensionError(f'coords must be M x 2, got {coords.shape}')
        if np.isnan(coords).any():
            raise ContractError('sampling coordinates contain NaN')
        cx, cy = coords[:, 0], coords[:, 1]
        self.inside_x = (cx >= 0) & (cx <= width - 1)
        self.inside_y = (cy >= 0) & (cy <= height - 1)
        x = np.clip(cx, 0, width - 1)
        y = np.clip(cy, 0, height - 1)
        x0 = np.minimum(np.floor(x).astype(np.intp), max(width - 2, 0))
        y0 = np.minimum(np.floor(y).astype(np.intp), max(height - 2, 0))
        x1 = np.minimum(x0 + 1, width - 1)
        y1 = np.minimum(y0 + 1, height - 1)
        self.fx = x - x0
        self.fy = y - y0
        self.i00 = y0 * width + x0
        self.i01 = y0 * width + x1
        self.i10 = y1 * width + x0
        self.i11 = y1 * width + x1

    def values(self, flat):
        """Corner values of a C x (H*W) map, each C x M."""
        return flat[:, self.i00], flat[:, self.i01], flat[:, self.i10], flat[:, self.i11]

    def scatter(self, shape, weighted):
        """Accumulate C x M contributions at the four corners into a C x H x W gradient."""
        channels = shape[0]
        full = np.zeros((shape[1] * shape[2], channels))
        for idx, contribution in zip((self.i00, self.i01, self.i10, self.i11), weighted):
            np.add.at(full, idx, contribution.T)
        return full.T.reshape(shape)


def _sampling_inputs(fmap, coords):
    fmap = as_tensor(fmap)
    if fmap.ndim != 3:
        raise DimensionError(f'feature map must be C x H x W, got {fmap.shape}')
    coords = as_tensor(coords)
    corners = _Corners(coords.data, fmap.shape[1], fmap.shape[2])
    return fmap, coords, corners


def bilinear_sample(fmap, coords):
    """
    Sample a C x H x W map at M continuous (x, y) positions -> C x M.

    Coordinates are clamped to the border. The backward pass produces
    gradients for the map values and for the coordinates; the latter is
    zero along an axis where the coordinate was clamped.
    """
    fmap, coords, c = _sampling_inputs(fmap, coords)
    flat = fmap.data.reshape(fmap.shape[0], -1)
    v00, v01, v10, v11 = c.values(flat)
    fx, fy = c.fx, c.fy
    out = (v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy)
           + v10 * (1 - fx) * fy + v11 * fx * fy)

    def backward(g):
        gmap = c.scatter(fmap.shape, (
            g * ((1 - fx) * (1 - fy)), g * (fx * (1 - fy)),
            g * ((1 - fx) * fy), g * (fx * fy),
        ))
        dvdx = (1 - fy) * (v01 - v00) + fy * (v11 - v10)
        dvdy = (1 - fx) * (v10 - v00) + fx * (v11 - v01)
        gx = (g * dvdx).sum(axis=0) * c.inside_x
        gy = (g * dvdy).sum(axis=0) * c.inside_y
        return gmap, np.stack([gx, gy], axis=1)

    return make_result(out, (fmap, coords), backward)


def bilinear_gradient(fmap, coords):
    """
    Spatial derivative of bilinear_sample at M positions -> 2 x C x M.

    Row 0 is d/dx, row 1 is d/dy. Differentiable in both the map and the
    coordinates (through the mixed second derivative of the bilinear
    patch), so jacobians built from it stay in the graph.
    """
    fmap, coords, c = _sampling_inputs(fmap, coords)
    flat = fmap.data.reshape(fmap.shape[0], -1)
    v00, v01, v10, v11 = c.values(flat)
    fx, fy = c.fx, c.fy
    dvdx = ((1 - fy) * (v01 - v00) + fy * (v11 - v10)) * c.inside_x
    dvdy = ((1 - fx) * (v10 - v00) + fx * (v11 - v01)) * c.inside_y
    cross = (v11 - v10) - (v01 - v00)

    def backward(g):
        gx = g[0] * c.inside_x
        gy = g[1] * c.inside_y
        gmap = c.scatter(fmap.shape, (
            -(1 - fy) * gx - (1 - fx) * gy,
            (1 - fy) * gx - fx * gy,
            -fy * gx + (1 - fx) * gy,
            fy * gx + fx * gy,
        ))
        gcx = (gy * cross).sum(axis=0) * c.inside_x
        gcy = (gx * cross).sum(axis=0) * c.inside_y
        return gmap, np.stack([gcx, gcy], axis=1)

    return make_result(np.stack([dvdx, dvdy]), (fmap, coords), backward)


def pixel_grid(height, width):
    """(x, y) coordinates of every pixel in row-major order, (H*W) x 2."""
    ys, xs = np.mgrid[0:height, 0:width]
    return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1).astype(np.float64)


def bilinear_resize(fmap, height, width):
    """
    Bilinearly resample a C x h x w map onto an explicit height x width grid.

    Output pixel j reads input coordinate j * (h / height), the same
    pixel-index convention as intrinsics scaling.
    """
    fmap = as_tensor(fmap)
    channels, h, w = fmap.shape
    coords = pixel_grid(height, width) * np.array([w / width, h / height])
    return reshape(bilinear_sample(fmap, coords), (channels, height, width))


def upsample_bilinear2x(fmap):
    """Bilinear resize of a C x H x W map to 2H x 2W."""
    fmap = as_tensor(fmap)
    return bilinear_resize(fmap, 2 * fmap.shape[1], 2 * fmap.shape[2])


def l1_loss_masked(pred, target, mask):
    """Mean absolute difference over the entries where `mask` is true."""
    pred, target = as_tensor(pred), as_tensor(target)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape or mask.shape != pred.shape:
        raise DimensionError(
            f'l1_loss_masked: shapes {pred.shape}, {target.shape}, {mask.shape} differ'
        )
    count = int(mask.sum())
    if count == 0:
        raise ContractError('l1_loss_masked: mask selects no entries')
    diff = pred.data - target.data
    loss = np.abs(diff[mask]).sum() / count

    def backward(g):
        grad = np.sign(diff) * mask * (g / count)
        return grad, -grad

    return make_result(np.asarray(loss), (pred, target), backward)
