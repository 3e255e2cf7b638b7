"""Planted block-structure interaction data for tests and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scfrec.dataset import InteractionMatrix


@dataclass(frozen=True)
class PlantedData:
    interactions: InteractionMatrix
    user_labels: np.ndarray
    item_labels: np.ndarray


def planted_interactions(
    n_users: int = 400,
    n_items: int = 200,
    n_communities: int = 4,
    n_categories: int = 4,
    p_in: float = 0.3,
    p_out: float = 0.01,
    seed: int = 0,
) -> PlantedData:
    """Bernoulli purchases with probability ``p_in`` inside matched blocks.

    User community ``c`` is matched to item category ``c % n_categories``;
    every other (user, item) cell is purchased with probability ``p_out``.
    Blocks are contiguous index ranges of near-equal size. Vertices that end
    up with no purchase are kept so the labels stay aligned with indices.
    """
    rng = np.random.default_rng(seed)
    user_labels = (np.arange(n_users) * n_communities) // n_users
    item_labels = (np.arange(n_items) * n_categories) // n_items
    match = (user_labels[:, None] % n_categories) == item_labels[None, :]
    prob = np.where(match, p_in, p_out)
    users, items = np.nonzero(rng.random((n_users, n_items)) < prob)
    R = InteractionMatrix(
        users,
        items,
        tuple(f"u{k}" for k in range(n_users)),
        tuple(f"i{k}" for k in range(n_items)),
    )
    return PlantedData(R, user_labels, item_labels)


def write_interactions_csv(path, R: InteractionMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id,item_id\n")
        for u, i in zip(R.users.tolist(), R.items.tolist()):
            fh.write(f"{R.user_ids[u]},{R.item_ids[i]}\n")
