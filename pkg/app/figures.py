import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go


def survival_figure(curve: pd.DataFrame, exact: pd.DataFrame = None) -> go.Figure:
    """Monte Carlo survival estimates with their Wilson band, and the exact curve when given."""
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=curve["t"], y=curve["ci_hi"], mode="lines", line=dict(width=0), showlegend=False))
    fig.add_trace(
        go.Scatter(x=curve["t"], y=curve["ci_lo"], mode="lines", line=dict(width=0), fill="tonexty", name="95% CI")
    )
    fig.add_trace(go.Scatter(x=curve["t"], y=curve["estimate"], mode="lines+markers", name="simulated"))
    if exact is not None:
        fig.add_trace(go.Scatter(x=exact["t"], y=exact["survival"], mode="lines", name="exact"))
    fig.update_layout(title="Survival probability P(τ > t)", xaxis_title="t", yaxis_title="P(τ > t)", yaxis_type="log")
    return fig


def profile_figure(frame: pd.DataFrame) -> go.Figure:
    """h, γ and α against the distance to the origin."""
    coords = [c for c in frame.columns if c.startswith("x") and c[1:].isdigit()]
    data = frame.assign(radius=frame[coords].abs().sum(axis=1))
    long = data.melt(id_vars=["radius"], value_vars=[c for c in ("h", "gamma", "alpha") if c in data], var_name="quantity")
    return px.scatter(long, x="radius", y="value", color="quantity", title="Site profiles by distance to the origin")


def gap_figure(frame: pd.DataFrame, x: str, y: str, title: str) -> go.Figure:
    data = frame.assign(**{y: np.maximum(frame[y].astype(float), 1e-300)})
    fig = px.line(data, x=x, y=y, markers=True, title=title)
    fig.update_layout(yaxis_type="log")
    return fig


def marginals_figure(frame: pd.DataFrame) -> go.Figure:
    """Conditioned site marginals against the product bounds."""
    fig = go.Figure()
    fig.add_trace(
        go.Scatter(
            x=frame["site"], y=frame["estimate"], mode="markers", name="estimate",
            error_y=dict(type="data", array=1.96 * frame["stderr"]),
        )
    )
    fig.add_trace(go.Scatter(x=frame["site"], y=frame["lower"], mode="lines", name="α bound"))
    fig.add_trace(go.Scatter(x=frame["site"], y=frame["upper"], mode="lines", name="ρ bound"))
    fig.update_layout(title="Conditioned site marginals", xaxis_title="site index", yaxis_title="occupation")
    return fig
