class JpegError(ValueError):
    """Malformed or unsupported JPEG stream, or an unencodable image."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        super().__init__(message)
        self.offset = offset
