"""Lattice layouts and the classical Bose-Hubbard Hamiltonian.

A :class:`SiteGraph` holds everything the Hamiltonian needs: hopping bonds,
per-site interaction constants and a partition of the sites into named
regions. Site order for two-ring layouts is left ring, chain, right ring.
Inside a ring the sites are stored in cyclic order, so the ring region can be
Fourier transformed directly; local site 0 of every ring is its contact site.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Region",
    "Bond",
    "SiteGraph",
    "ring",
    "two_rings_point",
    "two_rings_chain",
    "build_layout",
    "hopping_matrix",
    "classical_energy",
]


class Region(str, enum.Enum):
    LEFT_RING = "left_ring"
    RIGHT_RING = "right_ring"
    CHAIN = "chain"
    WHOLE = "whole"


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    hop: float


@dataclass(frozen=True, eq=False)
class SiteGraph:
    """Immutable lattice description.

    ``regions`` partitions the sites. ``Region.WHOLE`` always resolves to every
    site, even when it is not one of the stored partition blocks.
    """

    n_sites: int
    bonds: tuple[Bond, ...]
    g_site: np.ndarray
    regions: Mapping[Region, np.ndarray]
    rings: frozenset[Region] = frozenset()
    junctions: tuple[Bond, ...] = ()
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.g_site, dtype=float)
        if g.shape != (self.n_sites,):
            raise ValueError(f"g_site must have length {self.n_sites}, got shape {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "g_site", g)

        seen = set()
        for b in self.bonds:
            if not (0 <= b.i < self.n_sites and 0 <= b.j < self.n_sites):
                raise ValueError(f"bond {b} has an endpoint outside 0..{self.n_sites - 1}")
            if b.i == b.j:
                raise ValueError(f"self-loop at site {b.i}")
            key = (min(b.i, b.j), max(b.i, b.j))
            if key in seen:
                raise ValueError(f"duplicate bond between sites {key}")
            seen.add(key)

        frozen = {}
        covered = np.zeros(self.n_sites, dtype=int)
        for label, sites in self.regions.items():
            arr = np.asarray(sites, dtype=int)
            arr.setflags(write=False)
            frozen[Region(label)] = arr
            covered[arr] += 1
        if np.any(covered != 1):
            raise ValueError("regions must be disjoint and cover every site exactly once")
        object.__setattr__(self, "regions", frozen)

    def sites(self, region: Region | str) -> np.ndarray:
        region = Region(region)
        if region in self.regions:
            return self.regions[region]
        if region is Region.WHOLE:
            return np.arange(self.n_sites)
        raise KeyError(f"layout has no region {region.value!r}")

    def is_ring(self, region: Region | str) -> bool:
        region = Region(region)
        return region in self.rings

    def has_region(self, region: Region | str) -> bool:
        region = Region(region)
        return region in self.regions or region is Region.WHOLE

    def bond(self, i: int, j: int) -> Bond:
        for b in self.bonds:
            if (b.i, b.j) == (i, j):
                return b
            if (b.j, b.i) == (i, j):
                return Bond(i, j, b.hop)
        raise KeyError(f"no bond between sites {i} and {j}")

    def chain_path(self) -> list[Bond]:
        """Bonds from the left contact through the chain to the right contact, in order."""
        if not self.junctions:
            raise ValueError("layout has no junction bonds")
        if Region.CHAIN not in self.regions:
            return [self.junctions[0]]
        chain = self.regions[Region.CHAIN]
        left_contact = self.junctions[0].i
        path = [Bond(left_contact, int(chain[0]), self.junctions[0].hop)]
        for a, b in zip(chain[:-1], chain[1:]):
            path.append(self.bond(int(a), int(b)))
        path.append(Bond(int(chain[-1]), self.junctions[1].j, self.junctions[1].hop))
        return path


def _ring_bonds(offset: int, m: int, J: float) -> list[Bond]:
    return [Bond(offset + k, offset + (k + 1) % m, J) for k in range(m)]


def ring(m: int, J: float = 1.0, g: float = 0.0) -> SiteGraph:
    if m < 3:
        raise ValueError(f"ring size must be at least 3, got {m}")
    return SiteGraph(
        n_sites=m,
        bonds=tuple(_ring_bonds(0, m, J)),
        g_site=np.full(m, float(g)),
        regions={Region.WHOLE: np.arange(m)},
        rings=frozenset({Region.WHOLE}),
        layout={"kind": "ring", "M": m, "J": J},
    )


def _check_eps(eps: float, J: float):
    if not 0 < eps <= J:
        raise ValueError(f"junction hopping must satisfy 0 < eps <= J={J}, got {eps}")


def two_rings_point(m: int, eps: float, J: float = 1.0, g: float = 0.0) -> SiteGraph:
    if m < 3:
        raise ValueError(f"ring size must be at least 3, got {m}")
    _check_eps(eps, J)
    junction = Bond(0, m, eps)
    bonds = _ring_bonds(0, m, J) + _ring_bonds(m, m, J) + [junction]
    return SiteGraph(
        n_sites=2 * m,
        bonds=tuple(bonds),
        g_site=np.full(2 * m, float(g)),
        regions={Region.LEFT_RING: np.arange(m), Region.RIGHT_RING: np.arange(m, 2 * m)},
        rings=frozenset({Region.LEFT_RING, Region.RIGHT_RING}),
        junctions=(junction,),
        layout={"kind": "two_rings_point", "M": m, "eps": eps, "J": J},
    )


def two_rings_chain(
    m: int,
    length: int,
    eps: float,
    J: float = 1.0,
    g: float = 0.0,
    g_chain: float | None = 0.0,
) -> SiteGraph:
    """Two rings bridged by an open chain of ``length`` sites.

    ``g_chain=None`` gives chain sites the ring interaction ``g``. With
    ``length == 0`` the rings are joined directly through one bond of hop ``eps``.
    """
    if m < 3:
        raise ValueError(f"ring size must be at least 3, got {m}")
    if length < 0:
        raise ValueError(f"chain length must be non-negative, got {length}")
    _check_eps(eps, J)
    if length == 0:
        graph = two_rings_point(m, eps, J, g)
        object.__setattr__(graph, "layout", {"kind": "two_rings_chain", "M": m, "L": 0, "eps": eps, "J": J})
        return graph

    n = 2 * m + length
    c0, r0 = m, m + length
    bonds = _ring_bonds(0, m, J)
    bonds += [Bond(c0 + k, c0 + k + 1, J) for k in range(length - 1)]
    bonds += _ring_bonds(r0, m, J)
    junctions = (Bond(0, c0, eps), Bond(c0 + length - 1, r0, eps))
    bonds += list(junctions)

    g_site = np.full(n, float(g))
    g_site[c0:r0] = g if g_chain is None else g_chain
    return SiteGraph(
        n_sites=n,
        bonds=tuple(bonds),
        g_site=g_site,
        regions={
            Region.LEFT_RING: np.arange(m),
            Region.CHAIN: np.arange(c0, r0),
            Region.RIGHT_RING: np.arange(r0, n),
        },
        rings=frozenset({Region.LEFT_RING, Region.RIGHT_RING}),
        junctions=junctions,
        layout={"kind": "two_rings_chain", "M": m, "L": length, "eps": eps, "J": J},
    )


def build_layout(spec: Mapping) -> SiteGraph:
    """Build a graph from a layout descriptor.

    The descriptor is a mapping with ``kind`` in ``{"ring", "two_rings_point",
    "two_rings_chain"}`` plus ``M`` and, as the kind requires, ``L`` and ``eps``.
    Optional keys: ``J`` (default 1), ``g`` (ring interaction) and ``g_chain``.
    """
    kind = spec.get("kind")
    J = float(spec.get("J", 1.0))
    g = float(spec.get("g", 0.0))
    try:
        if kind == "ring":
            return ring(int(spec["M"]), J, g)
        if kind == "two_rings_point":
            return two_rings_point(int(spec["M"]), float(spec["eps"]), J, g)
        if kind == "two_rings_chain":
            g_chain = spec.get("g_chain", 0.0)
            return two_rings_chain(
                int(spec["M"]),
                int(spec["L"]),
                float(spec["eps"]),
                J,
                g,
                None if g_chain is None else float(g_chain),
            )
    except KeyError as exc:
        raise ValueError(f"layout {kind!r} is missing key {exc.args[0]!r}") from None
    raise ValueError(f"unknown layout kind {kind!r}; expected ring, two_rings_point or two_rings_chain")


def hopping_matrix(graph: SiteGraph) -> np.ndarray:
    """Real symmetric matrix with ``-hop/2`` on every bond."""
    h = np.zeros((graph.n_sites, graph.n_sites))
    for b in graph.bonds:
        h[b.i, b.j] -= 0.5 * b.hop
        h[b.j, b.i] -= 0.5 * b.hop
    return h


def _bond_arrays(bonds: Sequence[Bond]):
    i = np.array([b.i for b in bonds], dtype=int)
    j = np.array([b.j for b in bonds], dtype=int)
    hop = np.array([b.hop for b in bonds], dtype=float)
    return i, j, hop


def classical_energy(graph: SiteGraph, state: np.ndarray):
    """Return ``(E_total, E_K, E_P)`` for one state or a stack of states.

    ``state`` has shape ``(..., n_sites)``; the energies have shape ``(...)``.
    """
    a = np.asarray(state)
    if a.shape[-1] != graph.n_sites:
        raise ValueError(f"state has {a.shape[-1]} sites, graph has {graph.n_sites}")
    i, j, hop = _bond_arrays(graph.bonds)
    e_kin = -np.sum(hop * (a[..., i].conj() * a[..., j]).real, axis=-1)
    dens = a.real**2 + a.imag**2
    e_pot = 0.5 * np.sum(graph.g_site * dens**2, axis=-1)
    return e_kin + e_pot, e_kin, e_pot
