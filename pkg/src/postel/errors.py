"""Exception types shared across the package."""


class PostelError(Exception):
    """Base class for all package errors."""


class InvalidNode(PostelError, IndexError):
    def __init__(self, node):
        super().__init__(f"node id {node} out of range")
        self.node = node


class NoLabeledNodes(PostelError):
    pass


class InsufficientPairs(PostelError):
    pass


class DegenerateHomophily(PostelError, ValueError):
    pass


class EmptyMask(PostelError, ValueError):
    pass


class NonFiniteLoss(PostelError, FloatingPointError):
    def __init__(self, epoch):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class InfeasibleSpec(PostelError, ValueError):
    pass


class DegreeTooLarge(PostelError, ValueError):
    pass


class ConditionNotHomophilic(PostelError, ValueError):
    pass


class ConditionNotHeterophilic(PostelError, ValueError):
    pass


class ConditionOutOfRange(PostelError, ValueError):
    pass


class ShapeMismatch(PostelError, ValueError):
    pass


class ClassVanished(UserWarning):
    """Emitted when label subsampling leaves a class without any label."""


class InputError(PostelError, ValueError):
    """Malformed or missing input file; carries the offending location."""

    def __init__(self, path, message, line=None):
        where = f"{path}:{line}" if line is not None else f"{path}"
        super().__init__(f"{where}: {message}")
        self.path, self.line = path, line
