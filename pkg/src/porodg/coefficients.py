"""Scalar coefficient fields appearing in the bilinear and linear forms.

A coefficient must be evaluable at every volume quadrature point and,
single-valued per side, at every face quadrature point.  Supported shapes:

* a constant,
* a per-element constant (e.g. absolute permeability),
* a pointwise closure over position,
* a pointwise function of one or two discrete P1 fields (e.g. a saturation
  built from the two phase pressures), optionally with per-element parameter
  arrays fed after the field values,
* a product of two of the above.

Gradients (needed where the chain rule hits a coefficient inside a form) are
available for field functions with registered partial derivatives, for
spatial closures with a registered gradient, and for products.
"""

import numpy as np


class CoefficientField:
    """Base class; concrete variants implement the three evaluation hooks."""

    def volume_values(self, geom):
        raise NotImplementedError

    def face_values(self, geom, side):
        raise NotImplementedError

    def volume_gradients(self, geom):
        raise NotImplementedError(f"{type(self).__name__} has no gradient rule")

    @staticmethod
    def wrap(value):
        """Coerce a scalar, per-element array or CoefficientField."""
        if isinstance(value, CoefficientField):
            return value
        if np.isscalar(value):
            return ConstantCoefficient(float(value))
        return ElementCoefficient(np.asarray(value, dtype=float))


class ConstantCoefficient(CoefficientField):
    def __init__(self, value):
        self.value = float(value)

    def volume_values(self, geom):
        return np.full(geom.vol_qw.shape, self.value)

    def face_values(self, geom, side):
        return np.full(geom.face_qw.shape, self.value)

    def volume_gradients(self, geom):
        return np.zeros(geom.vol_qw.shape + (3,))


class ElementCoefficient(CoefficientField):
    """One value per element; discontinuous across faces."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def volume_values(self, geom):
        return np.broadcast_to(self.values[:, None], geom.vol_qw.shape)

    def face_values(self, geom, side):
        v = self.values[geom.face_field_elems[:, side]]
        return np.broadcast_to(v[:, None], geom.face_qw.shape)

    def volume_gradients(self, geom):
        # piecewise constant: zero inside every element
        return np.zeros(geom.vol_qw.shape + (3,))


class SpatialCoefficient(CoefficientField):
    """Pointwise closure over position, with an optional gradient closure."""

    def __init__(self, func, grad=None):
        self.func = func
        self.grad = grad

    def volume_values(self, geom):
        return np.asarray(self.func(geom.vol_qp.reshape(-1, 3))).reshape(
            geom.vol_qw.shape
        )

    def face_values(self, geom, side):
        return np.asarray(self.func(geom.face_qp.reshape(-1, 3))).reshape(
            geom.face_qw.shape
        )

    def volume_gradients(self, geom):
        if self.grad is None:
            raise NotImplementedError("spatial coefficient without gradient closure")
        return np.asarray(self.grad(geom.vol_qp.reshape(-1, 3))).reshape(
            geom.vol_qw.shape + (3,)
        )


class FieldCoefficient(CoefficientField):
    """Pointwise function of one or two P1 fields.

    func(*field_values, *param_values) is applied at quadrature points;
    `elem_params` are per-element arrays broadcast alongside.  `dfuncs`
    holds the partial derivatives with respect to each field, enabling the
    chain-rule gradient (P1 field gradients are element-wise constant).
    """

    def __init__(self, func, fields, elem_params=(), dfuncs=None):
        self.func = func
        self.fields = tuple(fields)
        self.elem_params = tuple(np.asarray(p, dtype=float) for p in elem_params)
        self.dfuncs = dfuncs

    def _args_volume(self, geom):
        vals = [geom.field_volume_values(f.coefs) for f in self.fields]
        params = [p[:, None] for p in self.elem_params]
        return vals, params

    def volume_values(self, geom):
        vals, params = self._args_volume(geom)
        return np.asarray(self.func(*vals, *params), dtype=float)

    def face_values(self, geom, side):
        vals = [geom.field_face_values(f.coefs, side) for f in self.fields]
        params = [p[geom.face_field_elems[:, side]][:, None] for p in self.elem_params]
        return np.asarray(self.func(*vals, *params), dtype=float)

    def volume_gradients(self, geom):
        if self.dfuncs is None:
            raise NotImplementedError("field coefficient without derivative rules")
        vals, params = self._args_volume(geom)
        out = np.zeros(geom.vol_qw.shape + (3,))
        for df, f in zip(self.dfuncs, self.fields):
            slope = np.asarray(df(*vals, *params), dtype=float)
            grad = geom.field_volume_gradients(f.coefs)  # (nE, 3)
            out += slope[:, :, None] * grad[:, None, :]
        return out


class ProductCoefficient(CoefficientField):
    def __init__(self, a, b):
        self.a = CoefficientField.wrap(a)
        self.b = CoefficientField.wrap(b)

    def volume_values(self, geom):
        return self.a.volume_values(geom) * self.b.volume_values(geom)

    def face_values(self, geom, side):
        return self.a.face_values(geom, side) * self.b.face_values(geom, side)

    def volume_gradients(self, geom):
        av = self.a.volume_values(geom)[:, :, None]
        bv = self.b.volume_values(geom)[:, :, None]
        return self.a.volume_gradients(geom) * bv + av * self.b.volume_gradients(geom)
