"""Tree-structured graphical models and boosting."""
