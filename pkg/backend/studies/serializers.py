from django.conf import settings
from rest_framework import serializers

from solvers.approximations import SMOOTHING_MODES
from spectral.exceptions import ResolutionMismatch
from spectral.fields import cells_per_period
from spectral.smoothing import KERNEL_NAMES

from .models import FITTED_COLUMNS, CoefficientSpec, StudyConfig

TERM_KINDS = ('const', 'trig', 'piecewise')


class TrigSerializer(serializers.Serializer):
    """amplitude · cos(2π k·x/L) or amplitude · sin(2π k·x/L)."""
    k = serializers.ListField(child=serializers.IntegerField(), min_length=1)
    kind = serializers.ChoiceField(choices=['cos', 'sin'])
    amplitude = serializers.FloatField(default=1.0)


class PiecewiseSerializer(serializers.Serializer):
    """
    Flat row-major array of M^d values, each held constant on a block of the
    target grid. ``resolution`` defaults to the target grid resolution.
    """
    values = serializers.ListField(child=serializers.FloatField(), min_length=1)
    resolution = serializers.IntegerField(min_value=1, required=False)


class TermSerializer(serializers.Serializer):
    const = serializers.FloatField(required=False)
    trig = TrigSerializer(required=False)
    piecewise = PiecewiseSerializer(required=False)

    def validate(self, data):
        present = [kind for kind in TERM_KINDS if kind in data]
        if len(present) != 1:
            raise serializers.ValidationError(f"A term needs exactly one of {', '.join(TERM_KINDS)}.")
        return data


class CoefficientEntrySerializer(serializers.Serializer):
    alpha = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    beta = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    terms = TermSerializer(many=True)


class SolverSerializer(serializers.Serializer):
    tol = serializers.FloatField(required=False)
    max_iter = serializers.IntegerField(min_value=1, required=False)
    restart = serializers.IntegerField(min_value=1, required=False)

    def validate_tol(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('The solver tolerance must lie in (0, 1).')
        return value


class FlagsSerializer(serializers.Serializer):
    symmetric = serializers.BooleanField(default=False)
    dealias = serializers.BooleanField(default=False)
    kernel = serializers.ChoiceField(choices=KERNEL_NAMES, default='steklov2')


class CustomKernelSerializer(serializers.Serializer):
    """Samples of an even 1-D profile at equispaced points of [−half_width, half_width]."""
    half_width = serializers.FloatField()
    values = serializers.ListField(child=serializers.FloatField(), min_length=3)

    def validate_half_width(self, value):
        if value <= 0:
            raise serializers.ValidationError('The kernel support must be positive.')
        return value

    def validate_values(self, value):
        if len(value) % 2 == 0:
            raise serializers.ValidationError('Use an odd number of samples so that 0 is a sample point.')
        if value[0] != 0.0 or value[-1] != 0.0:
            raise serializers.ValidationError('The profile must vanish at the ends of its support.')
        return value


class StudyConfigSerializer(serializers.Serializer):
    """
    Validates a study document and builds a StudyConfig on ``save()``.
    """
    name = serializers.CharField(default='study')
    d = serializers.IntegerField(min_value=1, max_value=3)
    m = serializers.IntegerField(min_value=1, max_value=4)
    cell_resolution = serializers.IntegerField(min_value=4)
    coefficients = CoefficientEntrySerializer(many=True)
    lambda0 = serializers.FloatField()
    lambda1 = serializers.FloatField()
    rhs = TermSerializer(many=True)
    torus_period = serializers.FloatField(default=1.0)
    epsilons = serializers.ListField(child=serializers.FloatField(), min_length=1)
    solver = SolverSerializer(required=False)
    seed = serializers.IntegerField(default=0)
    flags = FlagsSerializer(required=False)
    custom_kernel = CustomKernelSerializer(required=False)
    smoothing = serializers.ChoiceField(choices=SMOOTHING_MODES, default='iterated')
    rhs_modes = serializers.IntegerField(min_value=0, default=0)
    expectations = serializers.DictField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2), required=False)

    def validate_cell_resolution(self, value):
        if value % 2:
            raise serializers.ValidationError('The cell resolution must be even.')
        return value

    def validate_torus_period(self, value):
        if value <= 0:
            raise serializers.ValidationError('The torus period must be positive.')
        return value

    def validate_expectations(self, value):
        unknown = sorted(set(value) - set(FITTED_COLUMNS))
        if unknown:
            raise serializers.ValidationError(f"Unknown error columns: {', '.join(unknown)}.")
        for column, (low, high) in value.items():
            if low > high:
                raise serializers.ValidationError(f'Empty slope range for {column}.')
        return value

    def _validate_terms(self, terms, dim, resolution, where):
        for term in terms:
            if 'trig' in term and len(term['trig']['k']) != dim:
                raise serializers.ValidationError(f'{where}: frequency vectors need {dim} components.')
            if 'piecewise' in term:
                piece = term['piecewise']
                base = piece.get('resolution', resolution)
                if resolution % base:
                    raise serializers.ValidationError(
                        f'{where}: piecewise resolution {base} does not divide the grid resolution {resolution}.')
                if len(piece['values']) != base ** dim:
                    raise serializers.ValidationError(
                        f'{where}: expected {base ** dim} piecewise values, got {len(piece["values"])}.')

    def validate(self, data):
        dim, order = data['d'], data['m']
        if not 0 < data['lambda0'] <= data['lambda1']:
            raise serializers.ValidationError('Need 0 < lambda0 <= lambda1.')

        seen = set()
        for entry in data['coefficients']:
            for key in ('alpha', 'beta'):
                index = entry[key]
                if len(index) != dim or sum(index) != order:
                    raise serializers.ValidationError(
                        f'{key} = {index} is not a multiindex of length {order} in {dim} variables.')
            pair = (tuple(entry['alpha']), tuple(entry['beta']))
            if pair in seen:
                raise serializers.ValidationError(f'Coefficient {pair} is given twice.')
            seen.add(pair)
            self._validate_terms(entry['terms'], dim, data['cell_resolution'], f'a{pair}')

        period = data.get('torus_period', 1.0)
        resolutions = set()
        for epsilon in data['epsilons']:
            if epsilon <= 0:
                raise serializers.ValidationError('Every ε must be positive.')
            try:
                resolutions.add(cells_per_period(period, epsilon) * data['cell_resolution'])
            except ResolutionMismatch as exc:
                raise serializers.ValidationError(str(exc))
        if len(set(data['epsilons'])) != len(data['epsilons']):
            raise serializers.ValidationError('ε values must be distinct.')
        for resolution in sorted(resolutions):
            self._validate_terms(data['rhs'], dim, resolution, 'rhs')

        flags = data.get('flags', {})
        if flags.get('kernel') == 'custom' and 'custom_kernel' not in data:
            raise serializers.ValidationError("kernel 'custom' requires a custom_kernel block.")
        return data

    def create(self, validated_data):
        """
        Build the StudyConfig; solver settings missing from the document fall
        back to settings.HOMOG.
        """
        defaults = settings.HOMOG
        solver = validated_data.get('solver', {})
        flags = validated_data.get('flags', {})
        coefficients = tuple(
            CoefficientSpec(tuple(entry['alpha']), tuple(entry['beta']), tuple(entry['terms']))
            for entry in validated_data['coefficients']
        )
        return StudyConfig(
            name=validated_data['name'],
            dim=validated_data['d'],
            order=validated_data['m'],
            cell_resolution=validated_data['cell_resolution'],
            coefficients=coefficients,
            lambda0=validated_data['lambda0'],
            lambda1=validated_data['lambda1'],
            rhs=tuple(validated_data['rhs']),
            torus_period=validated_data['torus_period'],
            epsilons=tuple(validated_data['epsilons']),
            tol=solver.get('tol', defaults['SOLVER_TOL']),
            max_iter=solver.get('max_iter', defaults['SOLVER_MAX_ITER']),
            restart=solver.get('restart', defaults['GMRES_RESTART']),
            seed=validated_data['seed'],
            symmetric=flags.get('symmetric', False),
            dealias=flags.get('dealias', False),
            kernel=flags.get('kernel', 'steklov2'),
            custom_kernel=validated_data.get('custom_kernel'),
            smoothing=validated_data['smoothing'],
            rhs_modes=validated_data['rhs_modes'],
            expectations={key: tuple(value) for key, value in validated_data.get('expectations', {}).items()},
            source=dict(self.initial_data),
        )
