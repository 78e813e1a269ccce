"""Shared instance builders for the test suite."""

import pytest

import dqbsde as q


def structured_config(**overrides):
    cfg = {
        "problem.n": 1, "problem.d": 1, "problem.T": 1.0, "grid.N": 1,
        "generator.kind": "structured",
        "generator.1.g": "0", "generator.1.h": "0",
        "terminal.1": "w1", "terminal.bound": 1.0,
        "params.gamma": 1.0, "params.K": 1.0, "params.delta": 0.0, "params.C0": 3.0,
    }
    cfg.update(overrides)
    return cfg


def pure_quadratic_config(gamma=1.0, N=50, T=1.0, terminal="clamp(w1,-1,1)", bound=1.0):
    return structured_config(**{
        "grid.N": N, "problem.T": T,
        "generator.1.g": f"{gamma / 2.0!r}*norm2(z1)",
        "terminal.1": terminal, "terminal.bound": bound,
        "params.gamma": gamma,
    })


def remark22_config(N=50):
    """Two-component structured instance whose coupling part grows like
    log(|z|+1) off the diagonal; parameters sized so the budget check and
    the sampling falsifier both pass."""
    cfg = {
        "problem.n": 2, "problem.d": 1, "problem.T": 1.0, "grid.N": N,
        "generator.kind": "structured",
        "terminal.bound": 0.25,
        "params.gamma": 2.5, "params.K": 5.0, "params.delta": 0.5, "params.C0": 3.0,
        "params.alpha": "0=1", "params.beta": "0=1", "params.eta": "0=1",
    }
    for i in (1, 2):
        cfg[f"generator.{i}.g"] = f"norm2(z{i})*sin(log(norm(z{i})+1))"
        cfg[f"generator.{i}.h"] = "normy + sin(pow(normz,1.5)) + log(normz+1)"
        cfg[f"terminal.{i}"] = "0.25*clamp(w1,-1,1)"
    return cfg


def triangular_demo_config(N=50, terminal1="clamp(w1,-1,1)", terminal2="0", bound=1.0):
    return {
        "problem.n": 2, "problem.d": 1, "problem.T": 1.0, "grid.N": N,
        "generator.kind": "triangular",
        "generator.1.k": "0.5*norm2(z1)",
        "generator.2.k": "y1 + 0.5*norm2(z2)",
        "terminal.1": terminal1, "terminal.2": terminal2, "terminal.bound": bound,
        "params.gamma": 1.0, "params.K": 1.0, "params.delta": 0.0, "params.C0": 3.0,
        "triangular.powerAlpha": 0.0, "triangular.lipBeta": 0.0,
        "triangular.C1": 1.0, "triangular.C2": 1.0, "triangular.C3": 1.0,
    }


def contraction_config(N=40, lip_beta=2.0):
    """Scalar triangular instance with own-component Lipschitz constant 2,
    giving four quarter-length sub-intervals on [0, 1]."""
    return {
        "problem.n": 1, "problem.d": 1, "problem.T": 1.0, "grid.N": N,
        "generator.kind": "triangular",
        "generator.1.k": "2*y1",
        "terminal.1": "clamp(w1,-1,1)", "terminal.bound": 1.0,
        "params.gamma": 1.0, "params.K": 1.0, "params.delta": 0.0, "params.C0": 3.0,
        "triangular.lipBeta": lip_beta, "triangular.C1": 2.0, "triangular.C2": 1.0,
        "triangular.C3": 1.0,
    }


def planted_h2_config():
    """Structured instance whose coupling part grows linearly in |z|, which
    the log-growth condition cannot absorb at large |z|."""
    return structured_config(**{
        "grid.N": 4,
        "generator.1.h": "normz",
        "terminal.1": "0", "terminal.bound": 0.0,
        "params.alpha": "0=1", "params.eta": "0=1",
    })


def make(cfg):
    instance = q.assemble_problem(cfg)
    lattice = q.build_lattice(instance.grid, instance.d)
    return instance, lattice


def write_config(path, cfg):
    lines = [f"{k} = {v}" for k, v in cfg.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def remark22_instance():
    return make(remark22_config())


@pytest.fixture
def triangular_demo_instance():
    return make(triangular_demo_config())
