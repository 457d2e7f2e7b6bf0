"""CART trees, forests and gradient boosting."""

from .boosting import BoostedEnsemble, fit_boosted
from .cart import (
    Decision,
    DecisionTree,
    RegressionTree,
    TreeError,
    TreeNode,
    encode_path,
    encode_paths,
    fit_regression_tree,
    fit_tree,
    level_entropy,
    node_members,
    node_prototype,
    predict,
    tree_decision,
    tree_decisions,
)
from .forest import Forest, fit_forest

__all__ = [
    "BoostedEnsemble", "Decision", "DecisionTree", "Forest", "RegressionTree", "TreeError",
    "TreeNode", "encode_path", "encode_paths", "fit_boosted", "fit_forest", "fit_regression_tree",
    "fit_tree", "level_entropy", "node_members", "node_prototype", "predict", "tree_decision",
    "tree_decisions",
]
