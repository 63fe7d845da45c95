class ChannelLabError(Exception):
    def __init__(
            self,
            error_message,
            code=None,
            data=None,
    ):
        super().__init__(error_message, code, data)
        self.code = code
        self.error_message = error_message
        self.data = data

    def __str__(self):
        if self.code:
            return "(%s) %s" % (self.code, self.error_message)
        else:
            return self.error_message
