package com.vuldroid.application;

import android.content.Intent;
import android.net.Uri;
import android.os.Bundle;
import android.widget.Button;
import android.widget.EditText;

import androidx.appcompat.app.AppCompatActivity;

public class ForgetPassword extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_forget_password);

        Uri link = getIntent().getData();
        if (link != null) {
            // magic link handled from any host that matches the intent filter scheme
            String token = link.getQueryParameter("token");
            String redirect = link.getQueryParameter("next");
            Intent open = new Intent(Intent.ACTION_VIEW,
                    Uri.parse(redirect + "?token=" + token));
            startActivity(open);
            return;
        }

        EditText email = findViewById(R.id.resetEmail);
        Button send = findViewById(R.id.resetButton);
        send.setOnClickListener(v -> requestReset(email.getText().toString()));
    }

    private void requestReset(String email) {
        Api.post("/password/reset", "email=" + email);
    }
}
