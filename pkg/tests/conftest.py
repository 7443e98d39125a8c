import pytest

from uvol import (
    Butterfly,
    Call,
    Curve,
    MarketModel,
    PdeGrid,
    VolatilityBand,
    solve_bsb,
)


def constant_model(r=0.02, eta=0.07, mu=0.5, sigma=1.0, T=1.0) -> MarketModel:
    return MarketModel(
        r=Curve.constant(r),
        eta=Curve.constant(eta),
        mu=Curve.constant(mu),
        sigma=Curve.constant(sigma),
        T=T,
    )


@pytest.fixture(scope="session")
def model_ex():
    """Constant-coefficient market used throughout: r=2%, eta=7%, mu=0.5, sigma=1."""
    return constant_model()


@pytest.fixture(scope="session")
def band_wide():
    return VolatilityBand(0.01, 0.09)


@pytest.fixture(scope="session")
def band_degenerate():
    return VolatilityBand(0.04, 0.04)


@pytest.fixture(scope="session")
def call100():
    return Call(100.0)


@pytest.fixture(scope="session")
def butterfly():
    return Butterfly(90.0, 100.0, 110.0)


@pytest.fixture(scope="session")
def grid_default():
    return PdeGrid(anchor_spot=100.0)


@pytest.fixture(scope="session")
def grid_small():
    return PdeGrid(anchor_spot=100.0, n_x=100)


@pytest.fixture(scope="session")
def call_super_default(call100, model_ex, band_wide, grid_default):
    return solve_bsb(call100, model_ex, band_wide, grid_default, side="super")


@pytest.fixture(scope="session")
def call_sub_default(call100, model_ex, band_wide, grid_default):
    return solve_bsb(call100, model_ex, band_wide, grid_default, side="sub")


@pytest.fixture(scope="session")
def butterfly_super_default(butterfly, model_ex, band_wide, grid_default):
    return solve_bsb(butterfly, model_ex, band_wide, grid_default, side="super")
