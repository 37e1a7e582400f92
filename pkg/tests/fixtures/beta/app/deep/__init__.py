from ..models import Dog
