"""
Form validating a merged run configuration.

Values arrive as strings from config files and command-line flags, or as
native values from settings.DEPTHLAB; the form coerces and range-checks
them the same way in both cases.
"""

from django import forms

from datasets.scenes import Surface
from datasets.validators import validate_image_size
from propagation.propagate import PropagationMode


class RunConfigForm(forms.Form):
    """
    Every RunConfig field with its type and range.

    Cross-field rules (image size, window parity) are checked in clean().
    """

    # paths
    scene_dir = forms.CharField()
    checkpoint = forms.CharField()
    output_dir = forms.CharField()

    # pipeline
    n_planes = forms.IntegerField(min_value=2)
    prop_window = forms.IntegerField(min_value=3)
    prop_mode = forms.ChoiceField(choices=[(m, m) for m in PropagationMode.choices])
    sigma_spatial = forms.FloatField(min_value=0.0)
    sigma_range = forms.FloatField(min_value=0.0)
    gn_iterations = forms.IntegerField(min_value=0)
    gn_damping = forms.FloatField(min_value=0.0)
    gn_min_views = forms.IntegerField(min_value=1)
    gn_max_step_fraction = forms.FloatField(required=False, min_value=0.0)
    gn_reject_uphill = forms.BooleanField(required=False)
    fusion_eta = forms.FloatField(min_value=0.0)
    fusion_min_views = forms.IntegerField(min_value=2)
    fusion_prob_thresh = forms.FloatField(min_value=0.0, max_value=1.0)

    # training
    lr = forms.FloatField(min_value=0.0)
    lr_decay = forms.FloatField(min_value=0.0, max_value=1.0)
    lr_decay_every = forms.IntegerField(min_value=1)
    rmsprop_decay = forms.FloatField(min_value=0.0, max_value=1.0)
    rmsprop_eps = forms.FloatField(min_value=0.0)
    refine_weight = forms.FloatField(min_value=0.0)
    pretrain_epochs = forms.IntegerField(min_value=0)
    e2e_epochs = forms.IntegerField(min_value=0)
    seed = forms.IntegerField(min_value=0)

    # toy-scale switches
    width_scale = forms.FloatField(min_value=0.0)
    image_size = forms.IntegerField(min_value=8)
    num_views = forms.IntegerField(min_value=2)
    num_scenes = forms.IntegerField(min_value=1)
    surface = forms.ChoiceField(choices=[(s, s) for s in Surface.choices])
    trace = forms.BooleanField(required=False)
    random_init = forms.BooleanField(required=False)

    def clean_prop_window(self):
        k = self.cleaned_data['prop_window']
        if k % 2 == 0:
            raise forms.ValidationError('The propagation window must be odd.')
        return k

    def clean_image_size(self):
        size = self.cleaned_data['image_size']
        validate_image_size(size, size)
        return size

    def clean(self):
        cleaned = super().clean()
        for name in ('fusion_eta', 'width_scale', 'lr'):
            if cleaned.get(name) == 0:
                self.add_error(name, 'Must be strictly positive.')
        if cleaned.get('prop_mode') == PropagationMode.BILATERAL:
            for name in ('sigma_spatial', 'sigma_range'):
                if cleaned.get(name) == 0:
                    self.add_error(name, 'Bilateral propagation needs a positive kernel width.')
        return cleaned
