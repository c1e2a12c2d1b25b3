"""Precoder weights as variables of a `ConicProgram`.

Only links of the cooperation map get variables, so every precoder extracted from a solution
has exactly the map as its support.
"""
import math

import numpy as np

from jtcomp.solvers.conic import Affine, complex_sum
from jtcomp.system.metrics import SinrMode, unknown_links


class PrecoderVariables(object):
    def __init__(self, program, coop, n_t):
        self.coop = coop
        self.n_t = n_t
        self.entries = [(b, u, k) for b, u in zip(*np.nonzero(coop.mask)) for k in range(n_t)]
        self.position = {entry: nr for nr, entry in enumerate(self.entries)}
        self.embedding = program.add_complex_variables(len(self.entries))

    def weight(self, b, u, k):
        return self.embedding.variable(self.position[(b, u, k)])

    def amplitude(self, channels, user, stream):
        """sum_{b in B_stream} channels[b, user] . w[b, stream] as a complex affine form."""
        return complex_sum(self.weight(b, stream, k).times(channels[b, user, k])
                           for b in np.flatnonzero(self.coop.mask[:, stream]) for k in range(self.n_t)
                           if channels[b, user, k] != 0)

    def add_power_constraints(self, program, max_power=1.0):
        """Per-antenna power: sum_{u in U_b} |w_bu^(k)|^2 <= max_power."""
        root = math.sqrt(max_power)
        for b in range(self.coop.num_bs):
            served = np.flatnonzero(self.coop.mask[b])
            for k in range(self.n_t):
                if served.size:
                    program.add_soc([part for u in served for part in self.weight(b, u, k).parts()],
                                    Affine(const=root))

    def extract(self, x):
        values = self.embedding.extract(x)
        weights = np.zeros(self.coop.mask.shape + (self.n_t,), dtype=complex)
        for (b, u, k), value in zip(self.entries, values):
            weights[b, u, k] = value
        return weights

    def embed(self, weights):
        """Real variable vector (zero outside the precoder block) holding `weights`."""
        values = np.array([weights[entry] for entry in self.entries], dtype=complex)
        return self.embedding.embed(values)


def design_channels(masked, mode):
    """Channels the design model `mode` believes in: the fed-back ones, and for limited_naive
    sqrt(lambda^2) on every antenna of the links that were not fed back."""
    mode = SinrMode.parse(mode)
    if mode is SinrMode.FULL and not masked.coop.is_full:
        raise ValueError("mode 'full' needs full CSI feedback (threshold +inf)")
    channels = np.array(masked.known)
    if mode is SinrMode.LIMITED_NAIVE:
        unknown = ~masked.coop.mask
        channels[unknown] = np.sqrt(masked.lambda_sq)[unknown][:, None]
    return channels


def interference_terms(masked, mode, variables, user):
    """Real affine entries r whose squared norm is the design-model interference power at `user`."""
    mode = SinrMode.parse(mode)
    channels = design_channels(masked, mode)
    terms = []
    for stream in range(masked.num_users):
        if stream != user:
            terms.extend(variables.amplitude(channels, user, stream).parts())
    if mode is SinrMode.LIMITED_LAMBDA:
        unknown = unknown_links(masked.coop)
        for stream in range(masked.num_users):
            links = np.flatnonzero(unknown[:, user, stream])
            factor = math.sqrt(links.size)
            for b in links:
                amplitude = factor * math.sqrt(masked.lambda_sq[b, user])
                for k in range(variables.n_t):
                    weight = variables.weight(b, stream, k)
                    terms.extend([weight.re * amplitude, weight.im * amplitude])
    return [term for term in terms if term.coefs or term.const]


def signal_of(masked, variables, user):
    return variables.amplitude(masked.known, user, user)


