class NumericalError(ArithmeticError):
    """A computation produced numbers that cannot be used further"""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context
