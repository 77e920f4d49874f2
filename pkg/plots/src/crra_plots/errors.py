class SchemaMismatch(Exception):
    """A CSV file does not conform to the experiment output schema."""

    def __init__(self, filename, column):
        self.filename = filename
        self.column = column
        super().__init__(f"{filename}: missing column '{column}'")
